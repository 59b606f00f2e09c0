"""Desk-scale 5G NR uplink cell simulator with dynamic port and waveform
switching controlled by a deep Q-learning agent."""

__version__ = "0.1.0"
