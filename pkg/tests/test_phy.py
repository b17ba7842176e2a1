import itertools
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from turbolora.phy import (
    FrameParams,
    PolicyError,
    PolicyKind,
    RegionPolicy,
    check_dwell,
    check_dwell_ns,
    duty_cycle,
    frame_airtime,
    frame_airtime_ns,
    min_off_time,
    min_off_time_ns,
    payload_symbol_count,
    symbol_time,
)


def oracle_payload_symbols(pl, sf, cr, crc, explicit, de):
    """Smallest whole number of interleaver blocks covering the payload bits, found by search."""
    bits = 8 * pl - 4 * sf + 28 + 16 * crc - 20 * (0 if explicit else 1)
    per_block = 4 * (sf - 2 * de)
    blocks = 0
    while blocks * per_block < bits:
        blocks += 1
    return 8 + blocks * (cr + 4)


def oracle_airtime_s(pl, sf, bw, cr, crc=True, explicit=True, de=False, preamble=8):
    n = oracle_payload_symbols(pl, sf, cr, int(crc), explicit, int(de))
    return (Fraction(preamble) + Fraction(17, 4) + n) * Fraction(2**sf, bw)


def test_symbol_time_examples():
    assert symbol_time(FrameParams(spreading_factor=7)) == pytest.approx(1.024e-3, abs=1e-15)
    assert abs(symbol_time(FrameParams(spreading_factor=7)) * 1e3 - 1.02) <= 0.01
    assert symbol_time(FrameParams(spreading_factor=12)) == pytest.approx(32.768e-3, abs=1e-15)
    assert symbol_time(FrameParams(spreading_factor=7, bandwidth_hz=250_000)) == pytest.approx(0.512e-3, abs=1e-15)


def test_payload_symbols_examples():
    assert payload_symbol_count(FrameParams(payload_len_bytes=226)) == 338
    assert payload_symbol_count(FrameParams(payload_len_bytes=0, crc_enabled=False)) == 8
    ldro = FrameParams(spreading_factor=12, payload_len_bytes=51, low_datarate_optimize=True)
    # frozen from oracle_payload_symbols(51, 12, 1, 1, True, 1)
    assert oracle_payload_symbols(51, 12, 1, 1, True, 1) == 63
    assert payload_symbol_count(ldro) == 63


def test_frame_airtime_examples():
    assert frame_airtime_ns(FrameParams()) == 358_656_000
    assert abs(frame_airtime(FrameParams()) * 1e3 - 358.7) <= 0.05
    # 8 preamble + 4.25 sync + 8 payload symbols
    assert frame_airtime_ns(FrameParams(payload_len_bytes=0, crc_enabled=False)) == 20_736_000
    sf8 = FrameParams(spreading_factor=8, payload_len_bytes=226)
    assert oracle_airtime_s(226, 8, 125_000, 1) == Fraction(625152, 10**6)
    assert frame_airtime_ns(sf8) == 625_152_000


def test_oracle_equivalence_exhaustive():
    for pl, sf, cr, de, crc, explicit in itertools.product(
        range(256), range(7, 13), range(1, 5), (0, 1), (0, 1), (True, False)
    ):
        p = FrameParams(
            spreading_factor=sf,
            coding_rate_index=cr,
            low_datarate_optimize=bool(de),
            crc_enabled=bool(crc),
            explicit_header=explicit,
            payload_len_bytes=pl,
        )
        assert payload_symbol_count(p) == oracle_payload_symbols(pl, sf, cr, crc, explicit, de)


@pytest.mark.parametrize("sf", range(7, 13))
@pytest.mark.parametrize("bw", [125_000, 250_000, 500_000])
def test_airtime_matches_oracle_exactly(sf, bw):
    for pl in (0, 1, 17, 51, 128, 226, 255):
        p = FrameParams(spreading_factor=sf, bandwidth_hz=bw, payload_len_bytes=pl)
        assert Fraction(frame_airtime_ns(p), 10**9) == oracle_airtime_s(pl, sf, bw, 1)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"spreading_factor": 6},
        {"spreading_factor": 13},
        {"bandwidth_hz": 200_000},
        {"coding_rate_index": 0},
        {"coding_rate_index": 5},
        {"payload_len_bytes": 256},
        {"payload_len_bytes": -1},
    ],
)
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        FrameParams(**kwargs)


@given(
    sf=st.integers(7, 12),
    cr=st.integers(1, 4),
    de=st.booleans(),
    pl=st.integers(0, 254),
)
def test_airtime_monotone_in_payload(sf, cr, de, pl):
    a = FrameParams(spreading_factor=sf, coding_rate_index=cr, low_datarate_optimize=de, payload_len_bytes=pl)
    b = a.with_payload(pl + 1)
    assert frame_airtime_ns(b) >= frame_airtime_ns(a)
    step = payload_symbol_count(b) - payload_symbol_count(a)
    assert step in (0, cr + 4) or payload_symbol_count(a) == 8


@given(sf=st.integers(7, 11), pl=st.integers(0, 255), cr=st.integers(1, 4))
def test_airtime_strictly_increasing_in_sf(sf, pl, cr):
    a = FrameParams(spreading_factor=sf, payload_len_bytes=pl, coding_rate_index=cr)
    b = FrameParams(spreading_factor=sf + 1, payload_len_bytes=pl, coding_rate_index=cr)
    assert frame_airtime_ns(b) > frame_airtime_ns(a)


def test_symbol_quantization_steps():
    for cr in range(1, 5):
        counts = [payload_symbol_count(FrameParams(coding_rate_index=cr, payload_len_bytes=pl)) for pl in range(256)]
        for prev, cur in zip(counts, counts[1:]):
            assert cur - prev in (0, cr + 4)


def test_min_off_time_examples():
    eu = RegionPolicy.eu868()
    assert min_off_time(0.358656, eu) == pytest.approx(35.506944, abs=1e-9)
    assert min_off_time_ns(358_656_000, eu) == 35_506_944_000
    assert min_off_time(0.0, eu) == 0
    assert min_off_time(0.1, RegionPolicy(duty_cycle_fraction=1.0)) == 0
    with pytest.raises(PolicyError):
        min_off_time(0.1, RegionPolicy.us915())


@given(
    airtime_ns=st.integers(1, 10**10),
    fraction=st.floats(1e-4, 1.0, allow_nan=False),
)
def test_off_time_consistency(airtime_ns, fraction):
    policy = RegionPolicy(duty_cycle_fraction=fraction)
    off = min_off_time_ns(airtime_ns, policy)
    assert duty_cycle(airtime_ns, airtime_ns + off) <= fraction * (1 + 1e-12)
    # exact in rational arithmetic too
    assert Fraction(airtime_ns, airtime_ns + off) <= Fraction(fraction)


def test_duty_cycle_examples():
    dc = duty_cycle(0.358656, 36.358656)
    assert 100 * dc == pytest.approx(0.98644, abs=1e-5)
    assert abs(100 * dc - 0.99) <= 0.005
    assert duty_cycle(1.0, 100.0) == pytest.approx(0.01)
    assert duty_cycle(0.358656, 0.358656) == 1.0
    with pytest.raises(ValueError):
        duty_cycle(1.0, 0.5)
    with pytest.raises(ValueError):
        duty_cycle(0.0, 1.0)


def test_check_dwell():
    us = RegionPolicy.us915()
    assert check_dwell(0.358656, us)
    assert check_dwell(0.400, us)
    assert not check_dwell(0.500, us)
    assert check_dwell_ns(400_000_000, us)
    assert not check_dwell_ns(400_000_001, us)
    with pytest.raises(PolicyError):
        check_dwell(0.1, RegionPolicy.eu868())


def test_region_policy_validation():
    with pytest.raises(ValueError):
        RegionPolicy(PolicyKind.DUTY_CYCLE, duty_cycle_fraction=0)
    with pytest.raises(ValueError):
        RegionPolicy(PolicyKind.DUTY_CYCLE, duty_cycle_fraction=1.5)
    with pytest.raises(ValueError):
        RegionPolicy(PolicyKind.DWELL_TIME, max_dwell_ms=0)
