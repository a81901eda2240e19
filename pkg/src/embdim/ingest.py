"""File formats, chunk pooling, returns construction, and split management.

Interchange formats (all little-endian):

* flat embeddings  -- magic ``EMB1``, u32 row count, u32 dimension, then
  row-major float32 values.
* chunked embeddings -- magic ``EMC1``, u32 record count, u32 dimension,
  u32 max context length C, then per record: u32 doc-id byte length,
  utf-8 doc id, u32 chunk count M, M u32 non-pad token counts,
  M x dim float32 chunk vectors.
* targets sidecar CSV -- columns ``doc_id,target[,date][,split]``, one row
  per embedding row (flat format) or per doc id (chunked format).
* prices CSV -- columns ``ticker,date,close_bid_ask_avg``.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import SPLIT_NAMES, EmbeddingDataset, derive_seed, make_rng

FLAT_MAGIC = b"EMB1"
CHUNKED_MAGIC = b"EMC1"


class FormatError(ValueError):
    """Malformed or mismatching interchange file."""


@dataclass(frozen=True)
class ChunkedEmbeddingRecord:
    """Per-document chunk vectors plus the non-pad token count of each chunk."""

    doc_id: str
    chunk_vectors: np.ndarray  # (M, d) float32
    chunk_token_counts: np.ndarray  # (M,) int64, all >= 1

    def __post_init__(self):
        vecs = np.asarray(self.chunk_vectors, dtype=np.float32)
        counts = np.asarray(self.chunk_token_counts, dtype=np.int64)
        if vecs.ndim != 2 or vecs.shape[0] == 0:
            raise ValueError("chunk_vectors must be a non-empty (M, d) matrix")
        if counts.shape != (vecs.shape[0],):
            raise ValueError("one token count per chunk required")
        if np.any(counts < 1):
            raise ValueError("chunk token counts must be >= 1")
        object.__setattr__(self, "chunk_vectors", vecs)
        object.__setattr__(self, "chunk_token_counts", counts)

    @property
    def dim(self) -> int:
        return self.chunk_vectors.shape[1]


def pool_chunks(rec: ChunkedEmbeddingRecord, weighted: bool = True) -> np.ndarray:
    """Collapse a document's chunk vectors into one vector.

    With ``weighted`` (the default) each chunk contributes proportionally to
    its non-pad token count, so the result equals the mean over all tokens
    and a short final chunk is not over-weighted. ``weighted=False`` gives
    the flat mean over chunk vectors.
    """
    vecs = rec.chunk_vectors.astype(np.float64)
    if weighted:
        w = rec.chunk_token_counts.astype(np.float64)
        return (w[:, None] * vecs).sum(axis=0) / w.sum()
    return vecs.mean(axis=0)


def compute_return(p_prev: float, p_next: float) -> float:
    """Daily return from the prior close to the next close."""
    if not p_prev > 0:
        raise ValueError(f"previous price must be positive, got {p_prev}")
    return (p_next - p_prev) / p_prev


@dataclass(frozen=True)
class ReturnsRow:
    ticker: str
    date: str  # ISO-8601 date the article straddles
    p_prev: float
    p_next: float
    r: float

    def __post_init__(self):
        if not self.p_prev > 0:
            raise ValueError("p_prev must be positive")
        expected = compute_return(self.p_prev, self.p_next)
        if self.r != expected:
            raise ValueError("r does not equal (p_next - p_prev)/p_prev")


def read_prices_csv(path: str | Path) -> list[tuple[str, str, float]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"ticker", "date", "close_bid_ask_avg"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise FormatError(f"prices CSV must have columns {sorted(required)}")
        for row in reader:
            rows.append((row["ticker"], row["date"], float(row["close_bid_ask_avg"])))
    return rows


def build_returns(prices: list[tuple[str, str, float]]) -> list[ReturnsRow]:
    """Build per-date returns from consecutive closing prices of each ticker."""
    by_ticker: dict[str, list[tuple[str, float]]] = {}
    for ticker, date, price in prices:
        by_ticker.setdefault(ticker, []).append((date, price))
    out: list[ReturnsRow] = []
    for ticker in sorted(by_ticker):
        series = sorted(by_ticker[ticker])
        for i in range(1, len(series) - 1):
            p_prev = series[i - 1][1]
            p_next = series[i + 1][1]
            out.append(
                ReturnsRow(
                    ticker=ticker,
                    date=series[i][0],
                    p_prev=p_prev,
                    p_next=p_next,
                    r=compute_return(p_prev, p_next),
                )
            )
    return out


# ---------------------------------------------------------------------------
# flat embedding file


def save_embedding_file(
    dataset: EmbeddingDataset,
    emb_path: str | Path,
    targets_path: str | Path | None = None,
) -> tuple[Path, Path]:
    emb_path = Path(emb_path)
    targets_path = _sidecar_path(emb_path, targets_path)
    feats = np.ascontiguousarray(dataset.features, dtype=np.float32)
    n, d = feats.shape
    with open(emb_path, "wb") as fh:
        fh.write(FLAT_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(feats.astype("<f4", copy=False).tobytes(order="C"))
    _write_targets_csv(dataset, targets_path)
    return emb_path, targets_path


def _write_targets_csv(dataset: EmbeddingDataset, path: Path) -> None:
    cols = ["doc_id", "target"]
    if dataset.dates is not None:
        cols.append("date")
    if dataset.split_tags is not None:
        cols.append("split")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for i in range(dataset.n):
        row = [dataset.doc_ids[i], repr(float(dataset.targets[i]))]
        if dataset.dates is not None:
            row.append(dataset.dates[i])
        if dataset.split_tags is not None:
            row.append(str(dataset.split_tags[i]))
        writer.writerow(row)
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))


def _sidecar_path(emb_path: Path, targets_path: str | Path | None) -> Path:
    if targets_path is not None:
        return Path(targets_path)
    return emb_path.with_suffix(".csv")


def read_targets_csv(path: str | Path):
    """Read the sidecar CSV; returns (doc_ids, targets, dates | None, splits | None)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "doc_id" not in reader.fieldnames or "target" not in reader.fieldnames:
            raise FormatError("targets CSV must have doc_id and target columns")
        has_date = "date" in reader.fieldnames
        has_split = "split" in reader.fieldnames
        doc_ids, targets, dates, splits = [], [], [], []
        for i, row in enumerate(reader):
            doc_ids.append(row["doc_id"])
            try:
                targets.append(float(row["target"]))
            except ValueError as exc:
                raise FormatError(f"bad target value at row {i}: {row['target']!r}") from exc
            if has_date:
                dates.append(row["date"])
            if has_split:
                tag = row["split"]
                if tag not in SPLIT_NAMES:
                    raise FormatError(f"unknown split tag {tag!r} at row {i}")
                splits.append(tag)
    return (
        doc_ids,
        np.asarray(targets, dtype=np.float64),
        tuple(dates) if has_date else None,
        np.asarray(splits) if has_split else None,
    )


def load_embedding_file(
    emb_path: str | Path,
    targets_path: str | Path | None = None,
    provenance: str | None = None,
) -> EmbeddingDataset:
    """Load a flat embedding file plus its targets sidecar into a dataset."""
    emb_path = Path(emb_path)
    targets_path = _sidecar_path(emb_path, targets_path)
    raw = emb_path.read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{emb_path}: truncated header")
    if raw[:4] != FLAT_MAGIC:
        raise FormatError(f"{emb_path}: bad magic {raw[:4]!r}, expected {FLAT_MAGIC!r}")
    n, d = struct.unpack("<II", raw[4:12])
    if n == 0 or d == 0:
        raise FormatError(f"{emb_path}: empty dataset (n={n}, d={d})")
    expected = 12 + 4 * n * d
    if len(raw) != expected:
        raise FormatError(
            f"{emb_path}: payload size {len(raw)} does not match header "
            f"(expected {expected} bytes for n={n}, d={d})"
        )
    feats = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, d)
    bad = ~np.isfinite(feats)
    if bad.any():
        row = int(np.argwhere(bad)[0, 0])
        raise FormatError(f"{emb_path}: non-finite feature value at row {row}")
    doc_ids, targets, dates, splits = read_targets_csv(targets_path)
    if len(doc_ids) != n:
        raise FormatError(
            f"row count mismatch: {n} feature rows but {len(doc_ids)} target rows"
        )
    return EmbeddingDataset(
        features=feats,
        targets=targets,
        doc_ids=tuple(doc_ids),
        split_tags=splits,
        dates=dates,
        provenance=provenance if provenance is not None else str(emb_path),
    )


# ---------------------------------------------------------------------------
# chunked embedding file


def save_chunked_file(
    records: list[ChunkedEmbeddingRecord], path: str | Path, max_context: int
) -> Path:
    if not records:
        raise ValueError("no records to write")
    dim = records[0].dim
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHUNKED_MAGIC)
        fh.write(struct.pack("<III", len(records), dim, max_context))
        for rec in records:
            if rec.dim != dim:
                raise FormatError(
                    f"record {rec.doc_id!r} has dimension {rec.dim}, expected {dim}"
                )
            if np.any(rec.chunk_token_counts > max_context):
                raise FormatError(
                    f"record {rec.doc_id!r} has a token count above C={max_context}"
                )
            doc = rec.doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(doc)))
            fh.write(doc)
            m = rec.chunk_vectors.shape[0]
            fh.write(struct.pack("<I", m))
            fh.write(rec.chunk_token_counts.astype("<u4").tobytes())
            fh.write(rec.chunk_vectors.astype("<f4", copy=False).tobytes(order="C"))
    return path


def load_chunked_file(path: str | Path) -> tuple[list[ChunkedEmbeddingRecord], int]:
    """Read a chunked embedding file; returns (records, max_context)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != CHUNKED_MAGIC:
        raise FormatError(f"{path}: not a chunked embedding file")
    n_rec, dim, max_context = struct.unpack("<III", raw[4:16])
    if n_rec == 0 or dim == 0:
        raise FormatError(f"{path}: empty chunked file")
    off = 16
    records = []
    for k in range(n_rec):
        try:
            (id_len,) = struct.unpack_from("<I", raw, off)
            off += 4
            doc_id = raw[off : off + id_len].decode("utf-8")
            off += id_len
            (m,) = struct.unpack_from("<I", raw, off)
            off += 4
            counts = np.frombuffer(raw, dtype="<u4", count=m, offset=off).astype(np.int64)
            off += 4 * m
            vecs = np.frombuffer(raw, dtype="<f4", count=m * dim, offset=off).reshape(m, dim)
            off += 4 * m * dim
        except (struct.error, ValueError) as exc:
            raise FormatError(f"{path}: truncated record {k}") from exc
        if np.any(counts > max_context):
            raise FormatError(f"{path}: record {doc_id!r} token count above C={max_context}")
        records.append(
            ChunkedEmbeddingRecord(
                doc_id=doc_id, chunk_vectors=vecs, chunk_token_counts=counts
            )
        )
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return records, max_context


def assemble_pooled_dataset(
    chunked_path: str | Path,
    targets_path: str | Path,
    weighted: bool = True,
) -> EmbeddingDataset:
    """Pool a chunked file into one vector per document and join targets by doc id."""
    records, _ = load_chunked_file(chunked_path)
    doc_ids, targets, dates, splits = read_targets_csv(targets_path)
    by_id = {d: i for i, d in enumerate(doc_ids)}
    if len(by_id) != len(doc_ids):
        raise FormatError("duplicate doc_id in targets CSV")
    missing = [r.doc_id for r in records if r.doc_id not in by_id]
    if missing:
        raise FormatError(f"doc ids missing from targets CSV: {missing[:5]}")
    pooled = np.stack([pool_chunks(r, weighted=weighted) for r in records])
    idx = np.asarray([by_id[r.doc_id] for r in records])
    return EmbeddingDataset(
        features=pooled.astype(np.float32),
        targets=targets[idx],
        doc_ids=tuple(r.doc_id for r in records),
        dates=tuple(dates[i] for i in idx) if dates is not None else None,
        split_tags=splits[idx] if splits is not None else None,
        provenance=str(chunked_path),
    )


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test assignment rule.

    ``random`` mode shuffles with the given seed and cuts at ``fractions``.
    ``temporal`` mode tags rows dated on/after ``test_start`` as test and the
    final ``val_fraction`` of the remaining (pre-test) period as validation,
    unless an explicit ``val_start`` boundary is given.
    """

    mode: str  # "random" | "temporal"
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    test_start: str | None = None
    val_start: str | None = None
    val_fraction: float = 0.10

    def __post_init__(self):
        if self.mode not in ("random", "temporal"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "random":
            if abs(sum(self.fractions) - 1.0) > 1e-9:
                raise ValueError("split fractions must sum to 1")
            if any(f < 0 for f in self.fractions):
                raise ValueError("split fractions must be non-negative")
        else:
            if self.test_start is None:
                raise ValueError("temporal mode requires a test_start date")
            if self.val_start is not None and not self.val_start < self.test_start:
                raise ValueError("boundaries must be strictly ordered: val_start < test_start")
            if not 0 < self.val_fraction < 1:
                raise ValueError("val_fraction must lie in (0, 1)")


def apply_split(dataset: EmbeddingDataset, spec: SplitSpec) -> EmbeddingDataset:
    n = dataset.n
    tags = np.empty(n, dtype="<U5")
    if spec.mode == "random":
        order = make_rng(derive_seed(spec.seed, "split")).permutation(n)
        n_train = int(spec.fractions[0] * n + 0.5)
        n_val = int((spec.fractions[0] + spec.fractions[1]) * n + 0.5) - n_train
        tags[order[:n_train]] = "train"
        tags[order[n_train : n_train + n_val]] = "val"
        tags[order[n_train + n_val :]] = "test"
    else:
        if dataset.dates is None:
            raise ValueError("temporal split requires dated rows")
        dates = np.asarray(dataset.dates)
        is_test = dates >= spec.test_start
        tags[is_test] = "test"
        pre = np.flatnonzero(~is_test)
        if spec.val_start is not None:
            is_val = (dates >= spec.val_start) & ~is_test
            tags[np.flatnonzero(~is_test & ~is_val)] = "train"
            tags[np.flatnonzero(is_val)] = "val"
        else:
            # last val_fraction of the pre-test period, in time order
            order = pre[np.argsort(dates[pre], kind="stable")]
            n_val = int(len(pre) * spec.val_fraction + 0.5)
            tags[order[: len(pre) - n_val]] = "train"
            tags[order[len(pre) - n_val :]] = "val"
    out = dataset.with_split_tags(tags)
    out.require_splits()
    return out
