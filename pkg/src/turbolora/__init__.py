"""Simulator for splitting a payload across synchronized LoRa transmitters."""

from .codec import ImageMatrix, plan_chunks, reassemble, vectorize
from .gateway import TransferSession, TurboGateway
from .medium import ChannelPlan, Medium, MediumConfig
from .node import NodeConfig, TransferReport, run_transfer
from .phy import FrameParams, RegionPolicy, frame_airtime, payload_symbol_count, symbol_time

__version__ = "0.1.0"

__all__ = [
    "ChannelPlan",
    "FrameParams",
    "ImageMatrix",
    "Medium",
    "MediumConfig",
    "NodeConfig",
    "RegionPolicy",
    "TransferReport",
    "TransferSession",
    "TurboGateway",
    "frame_airtime",
    "payload_symbol_count",
    "plan_chunks",
    "reassemble",
    "run_transfer",
    "symbol_time",
    "vectorize",
]
