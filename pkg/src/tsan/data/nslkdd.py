"""NSL-KDD record parsing, label filtering and feature encoding."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import DataFormatError

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
    "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
    "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
    "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
    "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
    "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
)
CATEGORICAL = ("protocol_type", "service", "flag")
CATEGORICAL_POS = tuple(FEATURE_NAMES.index(c) for c in CATEGORICAL)
NUMERIC_NAMES = tuple(n for n in FEATURE_NAMES if n not in CATEGORICAL)
N_FIELDS = len(FEATURE_NAMES) + 2
PROTOCOLS = ("tcp", "udp", "icmp")

DOS_LABELS = frozenset({"neptune", "smurf", "pod", "teardrop", "land", "back"})
NORMAL_LABEL = "normal"


@dataclass(frozen=True)
class RawRecord:
    numeric: tuple[float, ...]
    protocol_type: str
    service: str
    flag: str
    label: str
    difficulty: int

    @property
    def categorical(self) -> tuple[str, str, str]:
        return self.protocol_type, self.service, self.flag


def parse_line(line: Sequence[str], lineno: int | None = None) -> RawRecord:
    if len(line) != N_FIELDS:
        raise DataFormatError(f"expected {N_FIELDS} fields, got {len(line)}", line=lineno)
    numeric = []
    for col, value in enumerate(line[:41]):
        if col in CATEGORICAL_POS:
            continue
        try:
            numeric.append(float(value))
        except ValueError:
            raise DataFormatError(f"non-numeric value {value!r} for {FEATURE_NAMES[col]}",
                                  line=lineno, column=col + 1) from None
    protocol = line[1].strip().lower()
    if protocol not in PROTOCOLS:
        raise DataFormatError(f"unknown protocol_type {line[1]!r}", line=lineno, column=2)
    try:
        difficulty = int(line[42])
    except ValueError:
        raise DataFormatError(f"non-integer difficulty {line[42]!r}", line=lineno, column=43) from None
    return RawRecord(tuple(numeric), protocol, line[2].strip(), line[3].strip(),
                     line[41].strip(), difficulty)


def parse_records(path: str | os.PathLike) -> list[RawRecord]:
    """Read an NSL-KDD text file (43 comma-separated fields, no header)."""
    records = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            records.append(parse_line(row, lineno))
    return records


def format_record(rec: RawRecord) -> str:
    values = []
    it = iter(rec.numeric)
    for col in range(41):
        if col in CATEGORICAL_POS:
            values.append(rec.categorical[CATEGORICAL_POS.index(col)])
        else:
            v = next(it)
            values.append(str(int(v)) if float(v).is_integer() else repr(float(v)))
    values += [rec.label, str(rec.difficulty)]
    return ",".join(values)


def write_records(path: str | os.PathLike, records: Iterable[RawRecord]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(format_record(rec) + "\n")


# ---------------------------------------------------------------------------
# labels


def binary_label(label: str) -> int | None:
    """1 for a DoS attack, 0 for normal traffic, None for anything else."""
    name = label.strip().lower().rstrip(".")
    if name in DOS_LABELS:
        return 1
    if name == NORMAL_LABEL:
        return 0
    return None


@dataclass
class LabeledRecords:
    records: list[RawRecord]
    labels: np.ndarray
    source_index: np.ndarray

    def __len__(self):
        return len(self.records)


def binarize_labels(records: Sequence[RawRecord]) -> LabeledRecords:
    """Keep DoS and normal records in file order, dropping other attacks."""
    kept, labels, source = [], [], []
    for i, rec in enumerate(records):
        y = binary_label(rec.label)
        if y is None:
            continue
        kept.append(rec)
        labels.append(y)
        source.append(i)
    return LabeledRecords(kept, np.asarray(labels, dtype=np.int64), np.asarray(source, dtype=np.int64))


# ---------------------------------------------------------------------------
# schema and scaling


@dataclass
class FeatureSchema:
    """Column layout of an encoded row: scaled numerics, then the one-hot blocks."""

    protocol_vocab: tuple[str, ...]
    service_vocab: tuple[str, ...]
    flag_vocab: tuple[str, ...]
    numeric_names: tuple[str, ...] = NUMERIC_NAMES

    @classmethod
    def fit(cls, records: Sequence[RawRecord]) -> "FeatureSchema":
        return cls(
            protocol_vocab=tuple(sorted({r.protocol_type for r in records})),
            service_vocab=tuple(sorted({r.service for r in records})),
            flag_vocab=tuple(sorted({r.flag for r in records})),
        )

    @property
    def width(self) -> int:
        return (len(self.numeric_names) + len(self.protocol_vocab)
                + len(self.service_vocab) + len(self.flag_vocab))

    @property
    def n_protocol(self) -> int:
        return len(self.protocol_vocab)

    def column(self, name: str) -> int:
        return self.numeric_names.index(name)

    def feature_names(self) -> list[str]:
        names = list(self.numeric_names)
        names += [f"protocol_type={v}" for v in self.protocol_vocab]
        names += [f"service={v}" for v in self.service_vocab]
        names += [f"flag={v}" for v in self.flag_vocab]
        return names

    def protocol_index(self, protocol: str) -> int:
        """Vocabulary position, or -1 for a protocol unseen at fit time."""
        try:
            return self.protocol_vocab.index(protocol)
        except ValueError:
            return -1

    def to_dict(self) -> dict:
        return {"protocol_vocab": list(self.protocol_vocab), "service_vocab": list(self.service_vocab),
                "flag_vocab": list(self.flag_vocab), "numeric_names": list(self.numeric_names)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(tuple(d["protocol_vocab"]), tuple(d["service_vocab"]), tuple(d["flag_vocab"]),
                   tuple(d.get("numeric_names", NUMERIC_NAMES)))


@dataclass
class ScalerStats:
    mean: np.ndarray
    std: np.ndarray
    min_std: float = field(default=1e-8, repr=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), self.min_std)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerStats":
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]))


def numeric_matrix(records: Sequence[RawRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, len(NUMERIC_NAMES)))
    return np.asarray([r.numeric for r in records], dtype=np.float64)


def fit_scaler(x: np.ndarray | Sequence[RawRecord]) -> ScalerStats:
    """Per-column mean and population standard deviation."""
    if not isinstance(x, np.ndarray):
        x = numeric_matrix(x)
    return ScalerStats(x.mean(axis=0), x.std(axis=0))


def apply_scaler(x: np.ndarray, stats: ScalerStats) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def one_hot(values: Sequence[str], vocab: Sequence[str]) -> np.ndarray:
    lookup = {v: i for i, v in enumerate(vocab)}
    out = np.zeros((len(values), len(vocab)), dtype=np.float32)
    for row, v in enumerate(values):
        col = lookup.get(v)
        if col is not None:
            out[row, col] = 1.0
    return out


def encode_records(records: Sequence[RawRecord], schema: FeatureSchema, stats: ScalerStats) -> np.ndarray:
    """Encoded float32 matrix ``(n, schema.width)``."""
    numeric = apply_scaler(numeric_matrix(records), stats).astype(np.float32)
    blocks = [numeric,
              one_hot([r.protocol_type for r in records], schema.protocol_vocab),
              one_hot([r.service for r in records], schema.service_vocab),
              one_hot([r.flag for r in records], schema.flag_vocab)]
    return np.concatenate(blocks, axis=1)
