"""Tests for per-replica key bundles and the key file."""

import pytest

from heron_bft.crypto.keys import deal_keys, dump_keys, load_keys, read_keys, write_keys
from heron_bft.errors import ConfigError, ParseError
from heron_bft.models import Config
from tests.conftest import TEST_MODULUS_BITS


def test_thresholds_follow_quorums(keys4):
    assert keys4.vcbc.threshold == 3
    assert keys4.coin.threshold == 2
    assert keys4.n == 4


def test_for_replica(keys4):
    rk = keys4.for_replica(2)
    assert rk.replica == 2
    assert rk.vcbc.signer == 2
    assert rk.coin_public is keys4.coin.public_key


def test_check_mismatch(keys4):
    keys4.check(Config(4, 1))
    with pytest.raises(ConfigError):
        keys4.check(Config(5, 1))
    with pytest.raises(ConfigError):
        keys4.check(Config(4, 0))


def test_key_file(tmp_path, keys4):
    path = write_keys(tmp_path / "keys" / "k.bin", keys4)
    loaded = read_keys(path)
    assert loaded == keys4
    assert dump_keys(loaded) == dump_keys(keys4)


def test_load_keys_rejects_garbage(keys4):
    with pytest.raises(ParseError):
        load_keys(b"nope")
    data = dump_keys(keys4)
    with pytest.raises(ParseError):
        load_keys(data[:-3])
    with pytest.raises(ParseError):
        load_keys(data + b"\x00")


def test_deal_keys_for_larger_config():
    keys = deal_keys(Config.for_n(7), 3, TEST_MODULUS_BITS)
    assert (keys.vcbc.threshold, keys.coin.threshold) == (5, 3)
