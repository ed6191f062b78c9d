"""Threshold signatures and dealer key material."""
