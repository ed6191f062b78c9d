"""Protocol, simulator and experiment defaults."""

from __future__ import annotations

# Wire format
FORMAT_TAG = 1  # leading byte of every encoded ProtocolMessage
TRACE_MAGIC = b"HBTR"
TRACE_FORMAT_TAG = 1
KEYFILE_MAGIC = b"HBKY"
KEYFILE_FORMAT_TAG = 1

# Domain-separation bytes for signed strings
VCBC_TAG = 0x56  # "V"
COIN_TAG = 0x43  # "C"

# Transactions
DEFAULT_TX_SIZE = 250  # bytes per transaction
DEFAULT_BATCH_SIZE = 1
INVALID_TX_MARKER = b"\xffINVALID\xff"  # prefix of transactions that do not count as goodput

# Threshold crypto
DEFAULT_MODULUS_BITS = 512
MIN_MODULUS_BITS = 128
PUBLIC_EXPONENT = 65537
CHALLENGE_BITS = 256  # size of the share-proof challenge
DEFAULT_KEY_SEED = 7

# Binary agreement
ABA_LOOKAHEAD_ROUNDS = 8  # future internal rounds buffered per instance
# Per-sender messages a correct replica sends in one internal round:
# two BVAL, one AUX, one CONF and one coin share.
ABA_MAX_BUFFERED_PER_SENDER = 5
ABA_BACKLOG_ROUNDS = 64  # outer rounds ahead of the current one whose ABA traffic is kept
ABA_MAX_INTERNAL_ROUNDS = 40  # acceptance bound on internal rounds per decision

# Simulator
DEBT_FACTOR = 64  # fairness-debt cap D = DEBT_FACTOR * n^2 scheduler steps
DEFAULT_MAX_STEPS = 400_000
DEFAULT_ATTACK_FRACTION = 0.25  # share of queues targeted by the VCBC-delay adversary
DEFAULT_FIXED_RATE_INTERVAL = 200  # steps between fixed-rate injections

# Experiments
DEFAULT_N = 4
DEFAULT_WORKLOAD = "full-load"
DEFAULT_BATCHES = 5  # batches per replica in a full-load run
DEFAULT_POLICY = "fair"
DEFAULT_FAULTS = "none"
DEFAULT_SEEDS = "1"
DEFAULT_OUT_DIR = "heron-out"
DEFAULT_FORMAT = "json"
