"""Allow running as `python -m heron_bft`."""

from heron_bft.cli import main

main()
