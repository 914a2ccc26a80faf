"""Cycle-stepped simulator for the spatial fabric."""
from .config import SimConfig
from .machine import DeadlockError, Machine, Message, simulate
from .router import (
    ADVANCE, DATA, HEADER, OPPOSITE, PORTS, RESET, Router, Wavelet, advance,
    data, reset)

__all__ = [
    "SimConfig", "Machine", "Message", "DeadlockError", "simulate",
    "Router", "Wavelet", "PORTS", "OPPOSITE",
    "DATA", "ADVANCE", "RESET", "HEADER", "data", "advance", "reset",
]
