"""Belief-aware MuZero workbench for the card game Skyjo."""

__version__ = "0.1.0"
