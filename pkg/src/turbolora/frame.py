from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Frame:
    """One over-the-air LoRa frame as seen by the gateway.

    ``packet_number`` is global and 1-based across a transfer; for image
    transfers it equals the row index carried in the first payload byte.
    Times are integer nanoseconds of simulated time.
    """

    device_id: int
    transfer_id: int
    packet_number: int
    payload: bytes
    crc_ok: bool = True
    rx_time_ns: int = 0
    frequency_hz: int = 0

    def received(self, *, crc_ok: bool, rx_time_ns: int, frequency_hz: int) -> Frame:
        return replace(self, crc_ok=crc_ok, rx_time_ns=rx_time_ns, frequency_hz=frequency_hz)
