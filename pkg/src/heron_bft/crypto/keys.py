"""Per-replica key bundles and the dealer key-material file."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from heron_bft.constants import DEFAULT_MODULUS_BITS, KEYFILE_FORMAT_TAG, KEYFILE_MAGIC
from heron_bft.crypto.threshold import DealerOutput, PublicKey, SecretShare, deal
from heron_bft.errors import ConfigError, ParseError
from heron_bft.models import Config, quorums
from heron_bft.wire import Reader, Writer


@dataclass(frozen=True)
class ReplicaKeys:
    replica: int
    vcbc: SecretShare
    coin: SecretShare

    @property
    def vcbc_public(self) -> PublicKey:
        return self.vcbc.public_key

    @property
    def coin_public(self) -> PublicKey:
        return self.coin.public_key


@dataclass(frozen=True)
class KeyMaterial:
    """Dealer output for broadcast proofs (threshold = echo quorum) and the coin (f+1)."""

    vcbc: DealerOutput
    coin: DealerOutput

    @property
    def n(self) -> int:
        return self.vcbc.public_key.n

    def for_replica(self, replica: int) -> ReplicaKeys:
        return ReplicaKeys(replica, self.vcbc.shares[replica], self.coin.shares[replica])

    def check(self, cfg: Config) -> None:
        """Raise ConfigError unless the thresholds match *cfg*."""
        q = quorums(cfg)
        if self.vcbc.public_key.n != cfg.n or self.coin.public_key.n != cfg.n:
            raise ConfigError(f"keys dealt for n={self.n}, config has n={cfg.n}")
        if self.vcbc.threshold != q.echo or self.coin.threshold != q.weak:
            raise ConfigError(
                f"key thresholds ({self.vcbc.threshold}, {self.coin.threshold}) "
                f"do not match config ({q.echo}, {q.weak})"
            )


def deal_keys(cfg: Config, seed: int, modulus_bits: int = DEFAULT_MODULUS_BITS) -> KeyMaterial:
    q = quorums(cfg)
    return KeyMaterial(
        vcbc=deal(cfg.n, q.echo, seed, modulus_bits),
        coin=deal(cfg.n, q.weak, seed + 1, modulus_bits),
    )


# --- Key file ---

def _write_dealer(w: Writer, out: DealerOutput) -> None:
    pk = out.public_key
    w.u32(pk.n).u32(pk.threshold).bigint(pk.modulus).bigint(pk.exponent).bigint(pk.generator)
    for vk in pk.verification_keys:
        w.bigint(vk)
    for share in out.shares:
        w.bigint(share.secret)


def _read_dealer(r: Reader) -> DealerOutput:
    n, threshold = r.u32(), r.u32()
    if not 1 <= threshold <= n or n > r.remaining:
        raise ParseError(f"bad dealer header n={n} t={threshold}")
    modulus, exponent, generator = r.bigint(), r.bigint(), r.bigint()
    vks = tuple(r.bigint() for _ in range(n))
    pk = PublicKey(modulus, exponent, n, threshold, generator, vks)
    shares = tuple(SecretShare(i, r.bigint(), pk) for i in range(n))
    return DealerOutput(pk, shares)


def dump_keys(keys: KeyMaterial) -> bytes:
    w = Writer().raw(KEYFILE_MAGIC).u8(KEYFILE_FORMAT_TAG)
    _write_dealer(w, keys.vcbc)
    _write_dealer(w, keys.coin)
    return w.getvalue()


def load_keys(data: bytes) -> KeyMaterial:
    r = Reader(data)
    if r.raw(len(KEYFILE_MAGIC)) != KEYFILE_MAGIC:
        raise ParseError("not a key file")
    tag = r.u8()
    if tag != KEYFILE_FORMAT_TAG:
        raise ParseError(f"unsupported key file format {tag}")
    keys = KeyMaterial(_read_dealer(r), _read_dealer(r))
    r.expect_end()
    return keys


def write_keys(path: Path, keys: KeyMaterial) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_keys(keys))
    return path


def read_keys(path: Path) -> KeyMaterial:
    return load_keys(path.read_bytes())
