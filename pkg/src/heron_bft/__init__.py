"""heron-bft: queue-pipelined asynchronous BFT atomic broadcast with a seeded simulator."""

__version__ = "0.1.0"
