"""Threshold RSA signatures with a trusted dealer.

Signatures are unique: any t valid shares over the same message combine to
the same e-th root of the message hash, so the combined value can serve both
as a transferable broadcast proof and as the seed of a common coin.

Construction:
  1. The dealer picks a modulus N = p*q from safe primes p = 2p'+1, q = 2q'+1
     and Shamir-shares d = e^-1 mod p'q' with a degree t-1 polynomial.
  2. Signer i releases x^(2*delta*s_i) plus a proof of discrete-log equality
     against its verification key v_i = v^(s_i) (delta = n!).
  3. Lagrange coefficients scaled by delta stay integral, so t shares yield
     w with w^e = x^(4*delta^2); a Bezout step recovers the e-th root of x.
"""

from __future__ import annotations

import functools
import hashlib
import math
import random
import struct
from dataclasses import dataclass, field

from Crypto.Util.number import getPrime, isPrime

from heron_bft.constants import (
    CHALLENGE_BITS,
    COIN_TAG,
    DEFAULT_MODULUS_BITS,
    MIN_MODULUS_BITS,
    PUBLIC_EXPONENT,
)
from heron_bft.errors import ConfigError, ParseError, ThresholdNotMet
from heron_bft.wire import Reader, Writer


# --- Key material ---

@dataclass(frozen=True)
class PublicKey:
    modulus: int
    exponent: int
    n: int
    threshold: int
    generator: int
    verification_keys: tuple[int, ...] = field(repr=False)

    @property
    def delta(self) -> int:
        return math.factorial(self.n)

    @property
    def size(self) -> int:
        """Byte length of a combined signature."""
        return (self.modulus.bit_length() + 7) // 8


@dataclass(frozen=True)
class SecretShare:
    signer: int
    secret: int = field(repr=False)
    public_key: PublicKey = field(repr=False)


@dataclass(frozen=True)
class DealerOutput:
    public_key: PublicKey
    shares: tuple[SecretShare, ...]

    @property
    def threshold(self) -> int:
        return self.public_key.threshold


@dataclass(frozen=True)
class SignatureShare:
    signer: int
    value: bytes


@dataclass(frozen=True)
class ThresholdSignature:
    value: bytes


@dataclass(frozen=True)
class CoinName:
    aba_round: int
    coin_round: int

    def encode(self) -> bytes:
        return struct.pack(">BQQ", COIN_TAG, self.aba_round, self.coin_round)


# --- Dealer ---

def deal(n: int, t: int, seed: int, modulus_bits: int = DEFAULT_MODULUS_BITS) -> DealerOutput:
    """Deterministically deal n shares with threshold t from *seed*."""
    if n < 1 or not 1 <= t <= n:
        raise ConfigError(f"invalid threshold t={t} for n={n}")
    if n >= PUBLIC_EXPONENT:
        raise ConfigError(f"n={n} too large for public exponent {PUBLIC_EXPONENT}")
    if modulus_bits < MIN_MODULUS_BITS:
        raise ConfigError(f"modulus_bits must be at least {MIN_MODULUS_BITS}")
    return _deal(n, t, seed, modulus_bits)


@functools.lru_cache(maxsize=64)
def _deal(n: int, t: int, seed: int, modulus_bits: int) -> DealerOutput:
    rng = random.Random(f"heron-dealer:{n}:{t}:{seed}:{modulus_bits}")
    e = PUBLIC_EXPONENT
    half = modulus_bits // 2
    while True:
        p = _safe_prime(half, rng)
        q = _safe_prime(modulus_bits - half, rng)
        m = ((p - 1) // 2) * ((q - 1) // 2)
        if p != q and m % e:
            break
    modulus = p * q
    coefficients = [pow(e, -1, m)] + [rng.randrange(m) for _ in range(t - 1)]
    secrets = [_evaluate(coefficients, i + 1, m) for i in range(n)]
    generator = pow(rng.randrange(2, modulus - 1), 2, modulus)
    public_key = PublicKey(
        modulus=modulus,
        exponent=e,
        n=n,
        threshold=t,
        generator=generator,
        verification_keys=tuple(pow(generator, s, modulus) for s in secrets),
    )
    shares = tuple(SecretShare(i, s, public_key) for i, s in enumerate(secrets))
    return DealerOutput(public_key, shares)


def _safe_prime(bits: int, rng: random.Random) -> int:
    while True:
        q = getPrime(bits - 1, randfunc=rng.randbytes)
        p = 2 * q + 1
        if p.bit_length() == bits and isPrime(p, randfunc=rng.randbytes):
            return p


def _evaluate(coefficients: list[int], x: int, m: int) -> int:
    result = 0
    for coefficient in reversed(coefficients):
        result = (result * x + coefficient) % m
    return result


# --- Hashing ---

def _hash_to_group(pk: PublicKey, message: bytes) -> int:
    seed = hashlib.sha256(message).digest()
    size = pk.size + 16
    out = b""
    counter = 0
    while len(out) < size:
        out += hashlib.sha256(b"H" + counter.to_bytes(4, "big") + seed).digest()
        counter += 1
    return int.from_bytes(out[:size], "big") % pk.modulus or 1


def _challenge(pk: PublicKey, *values: int) -> int:
    h = hashlib.sha256(b"C")
    for value in (pk.generator, *values):
        h.update(value.to_bytes(pk.size, "big"))
    return int.from_bytes(h.digest(), "big") >> (256 - CHALLENGE_BITS)


def _nonce(share: SecretShare, message: bytes) -> int:
    pk = share.public_key
    bits = pk.modulus.bit_length() + 2 * CHALLENGE_BITS
    key = share.secret.to_bytes((share.secret.bit_length() + 7) // 8 or 1, "big")
    seed = hashlib.sha256(b"R" + key + hashlib.sha256(message).digest()).digest()
    out = b""
    counter = 0
    while len(out) * 8 < bits:
        out += hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
        counter += 1
    return int.from_bytes(out, "big") >> (len(out) * 8 - bits)


# --- Shares and signatures ---

def sign_share(share: SecretShare, message: bytes) -> SignatureShare:
    """Produce signer's share over *message* together with its correctness proof."""
    pk = share.public_key
    modulus = pk.modulus
    x = _hash_to_group(pk, message)
    x_tilde = pow(x, 4 * pk.delta, modulus)
    x_i = pow(x, 2 * pk.delta * share.secret, modulus)
    r = _nonce(share, message)
    c = _challenge(
        pk,
        x_tilde,
        pk.verification_keys[share.signer],
        pow(x_i, 2, modulus),
        pow(pk.generator, r, modulus),
        pow(x_tilde, r, modulus),
    )
    z = share.secret * c + r
    return SignatureShare(share.signer, Writer().bigint(x_i).bigint(c).bigint(z).getvalue())


def _unpack_share(value: bytes) -> tuple[int, int, int]:
    reader = Reader(value)
    x_i, c, z = reader.bigint(), reader.bigint(), reader.bigint()
    reader.expect_end()
    return x_i, c, z


def verify_share(pk: PublicKey, signer: int, message: bytes, share: SignatureShare) -> bool:
    """Check the share's proof; never raises on malformed values."""
    if share.signer != signer or not 0 <= signer < pk.n:
        return False
    try:
        x_i, c, z = _unpack_share(share.value)
    except ParseError:
        return False
    modulus = pk.modulus
    max_z_bits = modulus.bit_length() + 2 * CHALLENGE_BITS + 1
    if not 0 < x_i < modulus or c.bit_length() > CHALLENGE_BITS or z.bit_length() > max_z_bits:
        return False
    v_i = pk.verification_keys[signer]
    x = _hash_to_group(pk, message)
    x_tilde = pow(x, 4 * pk.delta, modulus)
    try:
        v_prime = pow(pk.generator, z, modulus) * pow(v_i, -c, modulus) % modulus
        x_prime = pow(x_tilde, z, modulus) * pow(x_i, -2 * c, modulus) % modulus
    except ValueError:
        return False
    return c == _challenge(pk, x_tilde, v_i, pow(x_i, 2, modulus), v_prime, x_prime)


def _lagrange_at_zero(delta: int, point: int, points: list[int]) -> int:
    numerator = delta
    denominator = 1
    for other in points:
        if other != point:
            numerator *= -other
            denominator *= point - other
    return numerator // denominator


def combine(
    pk: PublicKey,
    message: bytes,
    shares: list[SignatureShare] | tuple[SignatureShare, ...],
    *,
    verified: bool = False,
) -> ThresholdSignature:
    """Combine t distinct valid shares into the unique signature over *message*.

    Args:
        verified: skip per-share proof checks when the caller already ran them.

    Raises:
        ThresholdNotMet: fewer than t distinct signers with valid shares.
    """
    distinct: dict[int, int] = {}
    for share in shares:
        if share.signer in distinct:
            continue
        if not verified and not verify_share(pk, share.signer, message, share):
            continue
        try:
            distinct[share.signer] = _unpack_share(share.value)[0]
        except ParseError:
            continue
    if len(distinct) < pk.threshold:
        raise ThresholdNotMet(f"{len(distinct)} valid shares, need {pk.threshold}")

    modulus = pk.modulus
    chosen = sorted(distinct)[: pk.threshold]
    points = [signer + 1 for signer in chosen]
    w = 1
    try:
        for signer, point in zip(chosen, points):
            coefficient = _lagrange_at_zero(pk.delta, point, points)
            w = w * pow(distinct[signer], 2 * coefficient, modulus) % modulus
        x = _hash_to_group(pk, message)
        e_prime = 4 * pk.delta * pk.delta
        a = pow(e_prime, -1, pk.exponent)
        b = (1 - a * e_prime) // pk.exponent
        y = pow(w, a, modulus) * pow(x, b, modulus) % modulus
    except ValueError as e:
        raise ThresholdNotMet(f"share not invertible: {e}") from e
    return ThresholdSignature(y.to_bytes(pk.size, "big"))


def verify(pk: PublicKey, message: bytes, sig: ThresholdSignature) -> bool:
    if len(sig.value) != pk.size:
        return False
    y = int.from_bytes(sig.value, "big")
    if not 0 < y < pk.modulus:
        return False
    return pow(y, pk.exponent, pk.modulus) == _hash_to_group(pk, message)


def coin_bit(sig: ThresholdSignature) -> int:
    """Low-order bit of the signature digest."""
    return hashlib.sha256(sig.value).digest()[-1] & 1
