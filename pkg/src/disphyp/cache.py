"""Binary propagator tables.

Layout (all little-endian)::

    bytes 0..7     magic  b"DISPHYP\\0"
    bytes 8..15    uint64 header length H
    bytes 16..16+H UTF-8 JSON header (sorted keys)
    rest           float64 payload, interleaved (Re, Im) of E[t, xi, row, col]
                   in row-major order

The header carries ``version``, ``system_hash``, ``zone`` ({N, nu}),
``grids`` ({"t": [...], "s": ..., "xi": [[...], ...]}), ``tolerances``,
``shape`` = [n_t, n_xi, m, m] and ``payload_sha256``.  Files are written to a
temporary name and renamed, so readers never see a partial table.
"""
import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CacheError

FORMAT_VERSION = 1
MAGIC = b"DISPHYP\0"
log = logging.getLogger(__name__)


@dataclass
class PropagatorTable:
    E: np.ndarray                      # (n_t, n_xi, m, m) complex
    t: np.ndarray
    xi: np.ndarray
    s: float = 0.0
    system_hash: str = ""
    zone: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def checksum(self):
        return hashlib.sha256(_payload(self.E)).hexdigest()

    def header(self):
        return {"version": FORMAT_VERSION, "system_hash": self.system_hash, "zone": self.zone,
                "grids": {"t": [float(x) for x in self.t], "s": float(self.s),
                          "xi": np.asarray(self.xi, dtype=float).tolist()},
                "tolerances": self.tolerances, "shape": list(self.E.shape),
                "payload_sha256": self.checksum()}


def _payload(E):
    E = np.ascontiguousarray(E, dtype=np.complex128)
    return np.stack([E.real, E.imag], axis=-1).astype("<f8").tobytes(order="C")


def default_cache_dir():
    return Path(os.environ.get("DISPHYP_CACHE_DIR", Path.home() / ".cache" / "disphyp"))


def write_table(path, table):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = json.dumps(table.header(), sort_keys=True).encode()
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(_payload(table.E))
    os.replace(tmp, path)
    return path


class VersionMismatch(CacheError):
    pass


def read_table(path, expect_hash=None):
    """Read a table; raises CacheError on corruption or hash mismatch."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CacheError(f"cannot read cache {path}: {exc}") from None
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CacheError("not a propagator table")
    (hl,) = struct.unpack("<Q", raw[8:16])
    if 16 + hl > len(raw):
        raise CacheError("truncated header")
    try:
        head = json.loads(raw[16:16 + hl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CacheError(f"corrupt header: {exc}") from None
    if head.get("version") != FORMAT_VERSION:
        raise VersionMismatch(f"cache version {head.get('version')} != {FORMAT_VERSION}")
    if expect_hash is not None and head.get("system_hash") != expect_hash:
        raise CacheError("system hash mismatch")
    shape = tuple(head["shape"])
    body = raw[16 + hl:]
    need = int(np.prod(shape)) * 16
    if len(body) != need:
        raise CacheError(f"payload has {len(body)} bytes, expected {need}")
    if hashlib.sha256(body).hexdigest() != head["payload_sha256"]:
        raise CacheError("payload checksum mismatch")
    a = np.frombuffer(body, dtype="<f8").reshape(shape + (2,))
    E = a[..., 0] + 1j * a[..., 1]
    g = head["grids"]
    return PropagatorTable(E, np.asarray(g["t"]), np.asarray(g["xi"]), g["s"],
                           head["system_hash"], head["zone"], head["tolerances"])


def cached_table(path, expect_hash, compute, use_cache=True):
    """Load ``path`` if valid, else ``compute()`` and write it back.

    Returns ``(table, status)`` with status in {"hit", "miss", "bypass", "invalid"}.
    """
    if not use_cache:
        return compute(), "bypass"
    path = Path(path)
    status = "miss"
    if path.exists():
        try:
            return read_table(path, expect_hash), "hit"
        except VersionMismatch as exc:
            log.warning("cache bypassed: %s", exc)
            status = "bypass"
        except CacheError as exc:
            log.warning("cache ignored, recomputing: %s", exc)
            status = "invalid"
    table = compute()
    if status != "bypass":      # a table from another format version is left alone
        write_table(path, table)
    return table, status
