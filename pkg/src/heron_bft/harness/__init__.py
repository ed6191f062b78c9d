"""Experiment runner, metrics and trace checking."""
