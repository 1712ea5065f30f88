"""Hierarchical-codebook multiuser beam training for mmWave massive MIMO."""

from .amcf import BeamSpec, amcf_design, build_ue_codebook
from .array_channel import ChannelPath, ChannelRealization, Codeword, SystemConfig, generate_channel
from .protocol import (overhead, feedback_overhead, run_exhaustive, run_simultaneous,
                       run_tdma_hierarchical)

__version__ = "0.1.0"
