import json
import struct

import numpy as np
import pytest

from disphyp.cache import (MAGIC, PropagatorTable, cached_table, read_table, write_table)
from disphyp.errors import CacheError


def make_table(rng, n_t=10, n_xi=5000):
    E = rng.standard_normal((n_t, n_xi, 2, 2)) + 1j * rng.standard_normal((n_t, n_xi, 2, 2))
    return PropagatorTable(E, np.linspace(1, 10, n_t), rng.standard_normal((n_xi, 2)), 0.0,
                           "abc123", {"N": 1.0, "nu": 0.0}, {"rtol": 1e-10})


def test_roundtrip_large(tmp_path, rng):
    tab = make_table(rng)                       # 2e5 complex entries
    path = write_table(tmp_path / "t.dhp", tab)
    back = read_table(path, "abc123")
    assert np.array_equal(back.E, tab.E) and np.array_equal(back.xi, tab.xi)
    assert back.checksum() == tab.checksum()
    assert back.zone == tab.zone and back.tolerances == tab.tolerances
    assert path.read_bytes()[:8] == MAGIC
    assert not list(tmp_path.glob("*.tmp*"))


def test_write_is_byte_deterministic(tmp_path, rng):
    tab = make_table(rng, 2, 10)
    a = write_table(tmp_path / "a.dhp", tab).read_bytes()
    b = write_table(tmp_path / "b.dhp", tab).read_bytes()
    assert a == b


def corrupt(path, how):
    raw = bytearray(path.read_bytes())
    if how == "truncate":
        raw = raw[:-17]
    elif how == "flip":
        raw[-3] ^= 0xFF
    elif how == "magic":
        raw[0:8] = b"NOTDISPH"
    path.write_bytes(bytes(raw))


@pytest.mark.parametrize("how", ["truncate", "flip", "magic"])
def test_corruption_is_detected_and_recomputed(tmp_path, rng, how):
    tab = make_table(rng, 2, 10)
    path = write_table(tmp_path / "t.dhp", tab)
    corrupt(path, how)
    with pytest.raises(CacheError):
        read_table(path)
    out, status = cached_table(path, "abc123", lambda: tab)
    assert status == "invalid" and out is tab
    assert read_table(path).checksum() == tab.checksum()


def test_hash_mismatch(tmp_path, rng):
    tab = make_table(rng, 2, 10)
    path = write_table(tmp_path / "t.dhp", tab)
    with pytest.raises(CacheError):
        read_table(path, "other")
    _, status = cached_table(path, "other", lambda: tab)
    assert status == "invalid"


def test_version_mismatch_bypasses(tmp_path, rng):
    tab = make_table(rng, 2, 10)
    path = write_table(tmp_path / "t.dhp", tab)
    raw = path.read_bytes()
    (hl,) = struct.unpack("<Q", raw[8:16])
    head = json.loads(raw[16:16 + hl])
    head["version"] = 99
    h = json.dumps(head, sort_keys=True).encode()
    path.write_bytes(MAGIC + struct.pack("<Q", len(h)) + h + raw[16 + hl:])
    before = path.read_bytes()
    out, status = cached_table(path, "abc123", lambda: tab)
    assert status == "bypass" and out is tab
    assert path.read_bytes() == before


def test_hit_miss_and_no_cache(tmp_path, rng):
    tab = make_table(rng, 2, 10)
    calls = []

    def compute():
        calls.append(1)
        return tab
    path = tmp_path / "sub" / "t.dhp"
    assert cached_table(path, "abc123", compute)[1] == "miss"
    t2, status = cached_table(path, "abc123", compute)
    assert status == "hit" and np.array_equal(t2.E, tab.E) and len(calls) == 1
    assert cached_table(path, "abc123", compute, use_cache=False)[1] == "bypass"
    assert len(calls) == 2
