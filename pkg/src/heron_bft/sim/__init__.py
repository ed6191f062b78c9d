"""Deterministic network simulator."""
