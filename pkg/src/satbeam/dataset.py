"""Labeled dataset container, persistence (CSV / BTDS binary), splitting and scaling."""
from __future__ import annotations

import csv
import logging
import struct
import zlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .array_model import BeamMetrics
from .objective import BeamSpec

log = logging.getLogger(__name__)

N_BITS = 324
SPLITS = ("unassigned", "train", "test", "validation")
CSV_SCHEMA_LINE = "#satbeam-dataset v1"
SPEC_COLUMNS = ["bw_az_deg", "bw_el_deg", "sll_az_db", "sll_el_db", "eirp_dbw",
                "steer_az_deg", "steer_el_deg", "n_active"]
BIT_COLUMNS = [f"w{i:03d}" for i in range(N_BITS)]
ACHIEVED_COLUMNS = ["a_" + f.name for f in fields(BeamMetrics)]
CSV_COLUMNS = SPEC_COLUMNS + ["cost", "accepted", "split"] + BIT_COLUMNS + ACHIEVED_COLUMNS

BIN_MAGIC = b"BTDS"
BIN_VERSION = 1


class DatasetError(ValueError):
    pass


class SchemaError(DatasetError):
    pass


class TruncatedFileError(DatasetError):
    pass


class ChecksumError(DatasetError):
    pass


@dataclass
class Sample:
    spec: BeamSpec
    quadrant_bits: np.ndarray
    achieved: BeamMetrics
    cost: float
    accepted: bool = True
    split: str = "unassigned"


class Dataset:
    """Column-oriented store of GA-labeled samples.

    ``features`` holds the requested :class:`BeamSpec` in feature order, ``bits``
    the 324 quadrant labels, ``achieved`` the measured :class:`BeamMetrics`.
    """

    def __init__(self, features, bits, achieved, cost, accepted, split=None, meta=None):
        self.features = np.asarray(features, dtype=float).reshape(-1, 8)
        n = len(self.features)
        self.bits = np.asarray(bits, dtype=np.uint8).reshape(n, -1)
        if self.bits.shape[1] != N_BITS:
            raise SchemaError(f"expected {N_BITS} label bits per sample, got {self.bits.shape[1]}")
        if not np.isin(self.bits, (0, 1)).all():
            raise SchemaError("label bits must be 0/1")
        self.achieved = np.asarray(achieved, dtype=float).reshape(n, 8)
        self.cost = np.asarray(cost, dtype=float).reshape(n)
        if (self.cost < 0).any():
            raise DatasetError("negative cost in dataset")
        self.accepted = np.asarray(accepted, dtype=bool).reshape(n)
        self.split = (np.zeros(n, np.uint8) if split is None else np.asarray(split, np.uint8).reshape(n))
        self.meta = dict(meta or {})
        for a in (self.features, self.bits, self.achieved, self.cost, self.accepted, self.split):
            a.setflags(write=False)

    @classmethod
    def from_samples(cls, samples: list[Sample], meta=None) -> "Dataset":
        if not samples:
            return cls(np.zeros((0, 8)), np.zeros((0, N_BITS)), np.zeros((0, 8)), [], [], [], meta)
        return cls(
            [s.spec.features() for s in samples],
            [np.asarray(s.quadrant_bits).ravel() for s in samples],
            [[getattr(s.achieved, f.name) for f in fields(BeamMetrics)] for s in samples],
            [s.cost for s in samples],
            [s.accepted for s in samples],
            [SPLITS.index(s.split) for s in samples],
            meta,
        )

    def __len__(self) -> int:
        return len(self.features)

    def __getitem__(self, i: int) -> Sample:
        return Sample(
            BeamSpec.from_features(self.features[i]),
            self.bits[i].copy(),
            BeamMetrics(*(float(x) for x in self.achieved[i])),
            float(self.cost[i]),
            bool(self.accepted[i]),
            SPLITS[self.split[i]],
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k), equal_nan=k in ("achieved",))
            for k in ("features", "bits", "achieved", "cost", "accepted", "split")
        )

    def with_split(self, split) -> "Dataset":
        return Dataset(self.features, self.bits, self.achieved, self.cost, self.accepted, split, self.meta)

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.split == SPLITS.index(split))

    def has_splits(self) -> bool:
        return bool((self.split != 0).any())

    def subset(self, split: str) -> "Dataset":
        i = self.indices(split)
        return Dataset(self.features[i], self.bits[i], self.achieved[i], self.cost[i],
                       self.accepted[i], self.split[i], self.meta)

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.sum())


# ---------------------------------------------------------------------------
# splitting

def split(dataset: Dataset, ratios=(0.70, 0.15, 0.15), seed: int = 0) -> Dataset:
    """Shuffle accepted samples into train/test/validation; rejected stay unassigned."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise DatasetError(f"split ratios must be three nonnegative values summing to 1, got {ratios}")
    acc = np.flatnonzero(dataset.accepted)
    if len(acc) < 10:
        raise DatasetError(f"need at least 10 accepted samples to split, have {len(acc)}")
    order = np.random.default_rng(seed).permutation(acc)
    n = len(acc)
    n_train = int(round(ratios[0] * n))
    n_test = int(round(ratios[1] * n))
    n_train = min(n_train, n)
    n_test = min(n_test, n - n_train)
    labels = np.zeros(len(dataset), np.uint8)
    labels[order[:n_train]] = SPLITS.index("train")
    labels[order[n_train:n_train + n_test]] = SPLITS.index("test")
    labels[order[n_train + n_test:]] = SPLITS.index("validation")
    return dataset.with_split(labels)


# ---------------------------------------------------------------------------
# persistence

def _fmt(x: float) -> str:
    return repr(float(x))


def save_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_SCHEMA_LINE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(dataset)):
            f = dataset.features[i]
            row = [_fmt(x) for x in f[:7]] + [str(int(round(f[7])))]
            row += [_fmt(dataset.cost[i]), str(int(dataset.accepted[i])), SPLITS[dataset.split[i]]]
            row += [str(int(b)) for b in dataset.bits[i]]
            row += [_fmt(x) for x in dataset.achieved[i]]
            w.writerow(row)


def load_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\r\n")
        if first != CSV_SCHEMA_LINE:
            raise SchemaError(f"unsupported dataset schema line {first!r} (expected {CSV_SCHEMA_LINE!r})")
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TruncatedFileError("dataset CSV has no header") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"dataset CSV missing column(s): {', '.join(missing[:5])}")
        col = {c: header.index(c) for c in CSV_COLUMNS}
        feats, bits, ach, cost, acc, spl = [], [], [], [], [], []
        for lineno, row in enumerate(reader, start=3):
            if len(row) != len(header):
                raise TruncatedFileError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            feats.append([float(row[col[c]]) for c in SPEC_COLUMNS])
            bits.append([int(row[col[c]]) for c in BIT_COLUMNS])
            ach.append([float(row[col[c]]) for c in ACHIEVED_COLUMNS])
            cost.append(float(row[col["cost"]]))
            acc.append(row[col["accepted"]] == "1")
            s = row[col["split"]]
            if s not in SPLITS:
                raise SchemaError(f"line {lineno}: unknown split {s!r}")
            spl.append(SPLITS.index(s))
    n = len(feats)
    return Dataset(np.reshape(feats, (n, 8)), np.reshape(bits, (n, N_BITS)), np.reshape(ach, (n, 8)),
                   cost, acc, spl)


def _payload(dataset: Dataset) -> bytes:
    n = len(dataset)
    parts = [
        struct.pack("<I", n),
        dataset.features.astype("<f8").tobytes(),
        dataset.achieved.astype("<f8").tobytes(),
        dataset.cost.astype("<f8").tobytes(),
        dataset.accepted.astype(np.uint8).tobytes(),
        dataset.split.astype(np.uint8).tobytes(),
        np.packbits(dataset.bits, axis=1, bitorder="little").tobytes(),
    ]
    return b"".join(parts)


def save_bin(dataset: Dataset, path) -> None:
    payload = _payload(dataset)
    with open(path, "wb") as fh:
        fh.write(BIN_MAGIC + bytes([BIN_VERSION]))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_bin(path) -> Dataset:
    raw = Path(path).read_bytes()
    if raw[:4] != BIN_MAGIC:
        raise SchemaError("not a BTDS dataset file (bad magic)")
    if len(raw) < 5:
        raise TruncatedFileError("BTDS header truncated")
    if raw[4] != BIN_VERSION:
        raise SchemaError(f"BTDS version {raw[4]} unsupported (expected {BIN_VERSION})")
    body = raw[5:]
    if len(body) < 8:
        raise TruncatedFileError("BTDS payload truncated")
    n = struct.unpack_from("<I", body)[0]
    row_bytes = 8 * 8 + 8 * 8 + 8 + 1 + 1 + (N_BITS + 7) // 8
    expect = 4 + n * row_bytes
    if len(body) < expect + 4:
        raise TruncatedFileError(f"BTDS payload has {len(body)} bytes, expected {expect + 4}")
    payload, crc = body[:expect], struct.unpack_from("<I", body, expect)[0]
    if zlib.crc32(payload) != crc:
        raise ChecksumError("BTDS checksum mismatch")
    off = 4

    def take(dtype, count):
        nonlocal off
        a = np.frombuffer(payload, dtype=dtype, count=count, offset=off)
        off += a.nbytes
        return a

    feats = take("<f8", n * 8).reshape(n, 8)
    ach = take("<f8", n * 8).reshape(n, 8)
    cost = take("<f8", n)
    acc = take(np.uint8, n).astype(bool)
    spl = take(np.uint8, n)
    packed = take(np.uint8, n * ((N_BITS + 7) // 8)).reshape(n, -1)
    bits = np.unpackbits(packed, axis=1, count=N_BITS, bitorder="little")
    return Dataset(feats.copy(), bits, ach.copy(), cost.copy(), acc, spl.copy())


def save(dataset: Dataset, path, fmt: str | None = None) -> None:
    fmt = fmt or ("bin" if str(path).endswith((".bin", ".btds")) else "csv")
    if fmt == "csv":
        save_csv(dataset, path)
    elif fmt == "bin":
        save_bin(dataset, path)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")


def load(path, fmt: str | None = None) -> Dataset:
    if fmt is None:
        with open(path, "rb") as fh:
            fmt = "bin" if fh.read(4) == BIN_MAGIC else "csv"
    return load_bin(path) if fmt == "bin" else load_csv(path)


# ---------------------------------------------------------------------------
# feature scaling

@dataclass
class FeatureScaler:
    """Per-feature min-max scaling to [0, 1], fitted on training rows only."""
    lo: np.ndarray
    hi: np.ndarray

    @property
    def span(self) -> np.ndarray:
        s = self.hi - self.lo
        return np.where(s > 0, s, 1.0)

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = (x - self.lo) / self.span
        return np.where(self.hi > self.lo, z, 0.0)

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.span + self.lo

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d) -> "FeatureScaler":
        return cls(np.asarray(d["lo"], float), np.asarray(d["hi"], float))


def fit_scaler(train) -> FeatureScaler:
    """Fit on a training :class:`Dataset` (its train split) or a raw feature array."""
    x = train.features[train.indices("train")] if isinstance(train, Dataset) else np.asarray(train, float)
    if x.ndim != 2 or len(x) == 0:
        raise DatasetError("cannot fit a scaler on an empty training split")
    lo, hi = x.min(axis=0), x.max(axis=0)
    for j in np.flatnonzero(hi <= lo):
        log.warning("feature %d is constant on the training split; it will scale to 0", j)
    return FeatureScaler(lo, hi)


def apply(scaler: FeatureScaler, spec) -> np.ndarray:
    """Normalized feature vector for a BeamSpec or raw feature array."""
    x = spec.features() if isinstance(spec, BeamSpec) else spec
    return scaler.transform(x)
