"""Binary feature cache.

Layout (all integers little-endian):
  magic ``MINTFC01``
  u32 format version (currently 1)
  length-prefixed UTF-8 kind tag (u32 length + bytes)
  u64 record count
  u32 ndim, then ndim x u32 per-record feature extents
  per record: length-prefixed sample id, u8 membership (0=Member, 1=External),
  length-prefixed source dataset, then the float32 payload.

Parsing is fail-closed: any malformed byte rejects the whole file with the
offending offset; no partial data is ever returned.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .aad import AuditableDataKind, FeatureSet

MAGIC = b"MINTFC01"
VERSION = 1

_MEMBER_CODE = {1.0: 0, 0.0: 1}  # label -> wire code (0=Member, 1=External)
_LABEL_FROM_CODE = {0: 1.0, 1: 0.0}


class CacheFormatError(ValueError):
    """Malformed cache file."""


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.raw):
            raise CacheFormatError(
                f"truncated file: need {n} bytes for {what} at offset {self.offset}, "
                f"have {len(self.raw) - self.offset}")
        out = self.raw[self.offset:self.offset + n]
        self.offset += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def string(self, what: str) -> str:
        n = self.u32(f"{what} length")
        try:
            return self.take(n, what).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CacheFormatError(f"{what} at offset {self.offset - n} is not UTF-8") from exc


def cache_features(features: FeatureSet, path) -> None:
    """Write one homogeneous feature set; round-trips bit-exactly."""
    shape = features.x.shape[1:]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(_pack_str(features.kind.tag))
        f.write(struct.pack("<Q", len(features.ids)))
        f.write(struct.pack("<I", len(shape)))
        for extent in shape:
            f.write(struct.pack("<I", extent))
        for i, sid in enumerate(features.ids):
            label = float(features.labels[i])
            if label not in _MEMBER_CODE:
                raise ValueError(f"sample {sid!r} has non-binary label {label}")
            f.write(_pack_str(sid))
            f.write(struct.pack("<B", _MEMBER_CODE[label]))
            f.write(_pack_str(features.sources[i]))
            f.write(np.ascontiguousarray(features.x[i], dtype="<f4").tobytes())


def load_features(path) -> FeatureSet:
    raw = Path(path).read_bytes()
    r = _Reader(raw)
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise CacheFormatError(f"bad magic at offset 0: {magic!r}")
    version = r.u32("version")
    if version != VERSION:
        raise CacheFormatError(f"unsupported format version {version}")
    kind = AuditableDataKind.from_tag(r.string("kind tag"))
    count = r.u64("record count")
    ndim = r.u32("ndim")
    if ndim > 8:
        raise CacheFormatError(f"implausible feature rank {ndim} at offset {r.offset - 4}")
    shape = tuple(r.u32(f"extent {i}") for i in range(ndim))
    per_record = int(np.prod(shape)) if shape else 1

    ids, labels, sources, rows = [], [], [], []
    for i in range(count):
        ids.append(r.string(f"record {i} sample id"))
        code = r.u8(f"record {i} membership")
        if code not in _LABEL_FROM_CODE:
            raise CacheFormatError(f"record {i}: invalid membership code {code}")
        labels.append(_LABEL_FROM_CODE[code])
        sources.append(r.string(f"record {i} source dataset"))
        payload = r.take(per_record * 4, f"record {i} payload")
        rows.append(np.frombuffer(payload, dtype="<f4").reshape(shape))
    if r.offset != len(raw):
        raise CacheFormatError(f"{len(raw) - r.offset} trailing bytes at offset {r.offset}")

    x = np.stack(rows).astype(np.float32) if rows else np.zeros((0, *shape), np.float32)
    form = "maps" if len(shape) == 3 else "vector"
    return FeatureSet(kind=kind, form=form, ids=tuple(ids), x=x,
                      labels=np.array(labels, dtype=np.float32), sources=tuple(sources))
