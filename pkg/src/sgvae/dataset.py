"""Trajectory containers and the on-disk dataset formats (CSV and binary)."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

FORMAT_VERSION = 1
BINARY_MAGIC = b"SGDS"
KINDS = ("equilibrium", "soliton_injected", "ood_uniform", "ood_quench_proxy", "generated")
META_COLUMNS = ("shot_id", "Q", "lambda_T", "kind", "n_solitons", "seed")


def wrap(phi):
    """Map angles onto [-pi, pi)."""
    return np.mod(np.asarray(phi, dtype=np.float64) + math.pi, 2.0 * math.pi) - math.pi


@dataclass
class Trajectory:
    phases: np.ndarray
    pixel_size: float
    meta: dict = field(default_factory=dict)


@dataclass(eq=False)
class Dataset:
    """A batch of wrapped phase trajectories of common length L.

    Per-shot metadata lives in parallel arrays; ``spec`` echoes whatever
    produced the data (synthesis spec, generation z, ...).
    """

    phases: np.ndarray
    pixel_size: float
    shot_id: np.ndarray
    Q: np.ndarray
    lambda_T: np.ndarray
    kind: np.ndarray
    n_solitons: np.ndarray
    seed: np.ndarray
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        self.phases = np.ascontiguousarray(self.phases, dtype=np.float64)
        if self.phases.ndim != 2:
            raise DataError(f"phases must be 2-D (shots, L), got shape {self.phases.shape}")
        n = self.phases.shape[0]
        self.shot_id = np.asarray(self.shot_id, dtype=np.int64)
        self.Q = np.asarray(self.Q, dtype=np.float64)
        self.lambda_T = np.asarray(self.lambda_T, dtype=np.float64)
        self.kind = np.asarray(self.kind, dtype=object)
        self.n_solitons = np.asarray(self.n_solitons, dtype=np.int64)
        self.seed = np.asarray(self.seed, dtype=np.uint64)
        for name in ("shot_id", "Q", "lambda_T", "kind", "n_solitons", "seed"):
            if getattr(self, name).shape != (n,):
                raise DataError(f"metadata column {name!r} has shape {getattr(self, name).shape}, expected ({n},)")

    @classmethod
    def from_phases(cls, phases, pixel_size=2.0, kind="generated", Q=math.nan, lambda_T=math.nan, seed=0, spec=None):
        phases = np.atleast_2d(np.asarray(phases, dtype=np.float64))
        n = phases.shape[0]
        return cls(
            phases=phases,
            pixel_size=pixel_size,
            shot_id=np.arange(n),
            Q=np.broadcast_to(np.asarray(Q, dtype=np.float64), (n,)).copy(),
            lambda_T=np.broadcast_to(np.asarray(lambda_T, dtype=np.float64), (n,)).copy(),
            kind=np.array([kind] * n, dtype=object),
            n_solitons=np.zeros(n, dtype=np.int64),
            seed=np.broadcast_to(np.asarray(seed, dtype=np.uint64), (n,)).copy(),
            spec=dict(spec or {}),
        )

    @property
    def L(self) -> int:
        return self.phases.shape[1]

    def __len__(self):
        return self.phases.shape[0]

    def __getitem__(self, i) -> Trajectory:
        meta = {name: getattr(self, name)[i] for name in META_COLUMNS}
        meta = {k: v.item() if isinstance(v, np.generic) else v for k, v in meta.items()}
        return Trajectory(self.phases[i].copy(), self.pixel_size, meta)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            phases=self.phases[index],
            pixel_size=self.pixel_size,
            shot_id=self.shot_id[index],
            Q=self.Q[index],
            lambda_T=self.lambda_T[index],
            kind=self.kind[index],
            n_solitons=self.n_solitons[index],
            seed=self.seed[index],
            spec=dict(self.spec),
        )

    @staticmethod
    def concat(parts, spec=None) -> "Dataset":
        parts = list(parts)
        if not parts:
            raise DataError("cannot concatenate zero datasets")
        pixel = {p.pixel_size for p in parts}
        if len(pixel) != 1:
            raise DataError(f"pixel sizes differ: {sorted(pixel)}")
        return Dataset(
            phases=np.concatenate([p.phases for p in parts]),
            pixel_size=parts[0].pixel_size,
            shot_id=np.concatenate([p.shot_id for p in parts]),
            Q=np.concatenate([p.Q for p in parts]),
            lambda_T=np.concatenate([p.lambda_T for p in parts]),
            kind=np.concatenate([p.kind for p in parts]),
            n_solitons=np.concatenate([p.n_solitons for p in parts]),
            seed=np.concatenate([p.seed for p in parts]),
            spec=dict(spec if spec is not None else parts[0].spec),
        )

    def header(self) -> dict:
        return {"format_version": FORMAT_VERSION, "L": self.L, "pixel_size": self.pixel_size, "spec": self.spec}

    def content_hash(self) -> str:
        """sha256 over the binary serialisation."""
        return hashlib.sha256(to_bytes(self)).hexdigest()


# -- binary -----------------------------------------------------------------

_REC_HEAD = struct.Struct("<qddqq Q")  # shot_id, Q, lambda_T, kind index, n_solitons, seed


def to_bytes(ds: Dataset) -> bytes:
    header = json.dumps(ds.header(), sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(BINARY_MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(header)))
    buf.write(header)
    buf.write(struct.pack("<Q", len(ds)))
    for i in range(len(ds)):
        kind = ds.kind[i]
        if kind not in KINDS:
            raise DataError(f"unknown dataset kind {kind!r}")
        rec = _REC_HEAD.pack(
            int(ds.shot_id[i]), float(ds.Q[i]), float(ds.lambda_T[i]), KINDS.index(kind),
            int(ds.n_solitons[i]), int(ds.seed[i]),
        ) + ds.phases[i].astype("<f8").tobytes()
        buf.write(struct.pack("<I", len(rec)))
        buf.write(rec)
    return buf.getvalue()


def from_bytes(data: bytes) -> Dataset:
    if data[:4] != BINARY_MAGIC:
        raise DataError("not a binary dataset (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported dataset format version {version}")
    pos = 12
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    (n,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    L = int(header["L"])
    expected = _REC_HEAD.size + 8 * L
    cols = {name: [] for name in META_COLUMNS}
    phases = np.empty((n, L))
    for i in range(n):
        (rlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if rlen != expected:
            raise DataError(f"record {i}: length {rlen} != expected {expected}")
        sid, q, lam, kidx, nsol, seed = _REC_HEAD.unpack_from(data, pos)
        phases[i] = np.frombuffer(data, dtype="<f8", count=L, offset=pos + _REC_HEAD.size)
        pos += rlen
        for name, value in zip(META_COLUMNS, (sid, q, lam, KINDS[kidx], nsol, seed)):
            cols[name].append(value)
    if pos != len(data):
        raise DataError(f"{len(data) - pos} trailing bytes after last record")
    return Dataset(phases=phases, pixel_size=float(header["pixel_size"]), spec=header.get("spec", {}), **cols)


# -- CSV ----------------------------------------------------------------------

CSV_PREFIX = "# sgvae-dataset "


def to_csv(ds: Dataset) -> str:
    out = io.StringIO()
    out.write(CSV_PREFIX + json.dumps(ds.header(), sort_keys=True) + "\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(META_COLUMNS) + [f"phi_{j}" for j in range(ds.L)])
    for i in range(len(ds)):
        writer.writerow(
            [int(ds.shot_id[i]), repr(float(ds.Q[i])), repr(float(ds.lambda_T[i])), ds.kind[i],
             int(ds.n_solitons[i]), int(ds.seed[i])]
            + [repr(float(v)) for v in ds.phases[i]]
        )
    return out.getvalue()


def from_csv(text: str) -> Dataset:
    first, _, rest = text.partition("\n")
    if not first.startswith(CSV_PREFIX):
        raise DataError("CSV dataset is missing its header record")
    header = json.loads(first[len(CSV_PREFIX):])
    rows = list(csv.reader(io.StringIO(rest)))
    if not rows:
        raise DataError("CSV dataset is missing its column row")
    names, body = rows[0], rows[1:]
    L = int(header["L"])
    if len(names) != len(META_COLUMNS) + L:
        raise DataError(f"expected {len(META_COLUMNS) + L} columns, got {len(names)}")
    phases = np.array([[float(v) for v in r[len(META_COLUMNS):]] for r in body]).reshape(len(body), L)
    return Dataset(
        phases=phases,
        pixel_size=float(header["pixel_size"]),
        shot_id=[int(r[0]) for r in body],
        Q=[float(r[1]) for r in body],
        lambda_T=[float(r[2]) for r in body],
        kind=[r[3] for r in body],
        n_solitons=[int(r[4]) for r in body],
        seed=[int(r[5]) for r in body],
        spec=header.get("spec", {}),
    )


def save(ds: Dataset, path) -> Path:
    path = Path(path)
    if path.suffix == ".csv":
        path.write_text(to_csv(ds))
    else:
        path.write_bytes(to_bytes(ds))
    return path


def load(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    if path.suffix == ".csv":
        return from_csv(path.read_text())
    return from_bytes(path.read_bytes())
