"""Loss functions, error distributions, significance tests, and curve analysis."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import t as student_t

from .autoencoder import AutoencoderModel, ae_decode, ae_encode
from .core import EmbeddingDataset, ZeroVarianceError


def huber(y, yhat, delta: float = 1.0):
    """Piecewise loss: quadratic within delta of zero residual, linear beyond.

    Accepts scalars or arrays; broadcasting follows numpy rules.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    r = np.asarray(y, dtype=np.float64) - np.asarray(yhat, dtype=np.float64)
    a = np.abs(r)
    out = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
    return float(out) if out.ndim == 0 else out


def huber_grad(residual, delta: float = 1.0):
    """d huber / d residual; clipped identity."""
    return np.clip(np.asarray(residual, dtype=np.float64), -delta, delta)


@dataclass(frozen=True)
class ErrorDistribution:
    """Per-sample Huber errors of one configuration on an aligned sample set."""

    per_sample_errors: np.ndarray
    config_label: str
    delta: float = 1.0

    def __post_init__(self):
        errs = np.asarray(self.per_sample_errors, dtype=np.float64)
        if errs.ndim != 1 or errs.size == 0:
            raise ValueError("per_sample_errors must be a non-empty vector")
        if np.any(errs < 0) or not np.all(np.isfinite(errs)):
            raise ValueError("Huber errors must be finite and non-negative")
        errs = np.ascontiguousarray(errs)
        errs.flags.writeable = False
        object.__setattr__(self, "per_sample_errors", errs)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_sample_errors))

    def __len__(self) -> int:
        return self.per_sample_errors.size


def error_distribution(y, yhat, delta: float = 1.0, label: str = "") -> ErrorDistribution:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    return ErrorDistribution(huber(y, yhat, delta), config_label=label, delta=delta)


def significance_band(p_value: float) -> str:
    if p_value < 0.01:
        return "p<.01"
    if p_value < 0.05:
        return "p<.05"
    return "ns"


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    comparison: tuple[str, str]
    variant: str  # "paired" | "welch"
    df: float

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value out of range")

    @property
    def band(self) -> str:
        return significance_band(self.p_value)


def t_test(a: ErrorDistribution, b: ErrorDistribution, variant: str = "paired") -> TTestResult:
    """Two-sided t-test between two error distributions.

    The paired variant runs on per-sample differences and requires aligned,
    equal-length samples; ``welch`` handles unaligned comparisons. A
    zero-variance situation yields p = 1 when the means agree and is an
    error otherwise.
    """
    comparison = (a.config_label, b.config_label)
    ea = a.per_sample_errors
    eb = b.per_sample_errors
    if variant == "paired":
        if len(ea) != len(eb):
            raise ValueError("paired t-test requires equal-length aligned samples")
        n = len(ea)
        if n < 2:
            raise ValueError("need at least 2 samples")
        d = ea - eb
        sd = float(np.std(d, ddof=1))
        dbar = float(np.mean(d))
        df = float(n - 1)
        if sd == 0.0:
            if dbar == 0.0:
                return TTestResult(0.0, 1.0, comparison, "paired", df)
            raise ZeroVarianceError(
                "zero-variance difference vector with unequal means"
            )
        t_stat = dbar / (sd / np.sqrt(n))
    elif variant == "welch":
        na, nb = len(ea), len(eb)
        if na < 2 or nb < 2:
            raise ValueError("need at least 2 samples per side")
        va = float(np.var(ea, ddof=1))
        vb = float(np.var(eb, ddof=1))
        ma = float(np.mean(ea))
        mb = float(np.mean(eb))
        if va == 0.0 and vb == 0.0:
            if ma == mb:
                return TTestResult(0.0, 1.0, comparison, "welch", float(na + nb - 2))
            raise ZeroVarianceError("zero-variance samples with unequal means")
        se2 = va / na + vb / nb
        df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
        t_stat = (ma - mb) / np.sqrt(se2)
    else:
        raise ValueError(f"unknown t-test variant {variant!r}")
    p = 2.0 * float(student_t.sf(abs(t_stat), df))
    p = min(p, 1.0)
    return TTestResult(float(t_stat), p, comparison, variant, float(df))


Dimension = int | str  # latent width or "raw"


@dataclass(frozen=True)
class LossCurve:
    """Mean Huber loss per latent dimension; ``raw`` marks the uncompressed run."""

    points: tuple[tuple[Dimension, float], ...]
    normalized: tuple[tuple[Dimension, float], ...] | None = None

    def losses(self) -> np.ndarray:
        return np.asarray([loss for _, loss in self.points], dtype=np.float64)


def normalize_curve(curve: LossCurve) -> LossCurve:
    """Affinely rescale so the minimum maps to 0 and the maximum to 1."""
    if len(curve.points) < 2:
        raise ValueError("need at least 2 points to normalize")
    losses = curve.losses()
    lo, hi = float(losses.min()), float(losses.max())
    if hi == lo:
        raise ValueError("cannot normalize a constant curve")
    normalized = tuple(
        (dim, (loss - lo) / (hi - lo)) for dim, loss in curve.points
    )
    return replace(curve, normalized=normalized)


def intrinsic_dimension(
    curve: LossCurve, threshold: float = 0.10, rule: str = "normalized"
) -> int:
    """Smallest latent dimension whose loss is within ``threshold`` of the best.

    ``normalized`` applies the threshold to the max-min normalized curve;
    ``ratio`` reads it as loss <= (1 + threshold) * min. Points labelled
    "raw" are reference values, not candidate dimensions.
    """
    numeric = [(dim, loss) for dim, loss in curve.points if isinstance(dim, int)]
    if not numeric:
        raise ValueError("curve has no numeric dimensions")
    numeric.sort(key=lambda p: p[0])
    losses = np.asarray([loss for _, loss in numeric])
    lo, hi = float(losses.min()), float(losses.max())
    if rule == "normalized":
        if hi == lo:
            return numeric[0][0]  # every point attains the minimum
        for dim, loss in numeric:
            if (loss - lo) / (hi - lo) <= threshold:
                return dim
    elif rule == "ratio":
        for dim, loss in numeric:
            if loss <= (1.0 + threshold) * lo:
                return dim
    else:
        raise ValueError(f"unknown intrinsic-dimension rule {rule!r}")
    return numeric[-1][0]  # unreachable: the minimum always qualifies


@dataclass(frozen=True)
class ReconSimilarity:
    mean_cosine: float
    excluded: int  # zero-norm inputs or reconstructions left out


def reconstruction_similarity(
    model: AutoencoderModel, data: EmbeddingDataset | np.ndarray
) -> ReconSimilarity:
    """Mean cosine similarity between inputs and their reconstructions."""
    feats = data.features if isinstance(data, EmbeddingDataset) else np.asarray(data)
    v = np.asarray(feats, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise ValueError("need a non-empty (N, d) matrix")
    vhat = ae_decode(model, ae_encode(model, v))
    nv = np.linalg.norm(v, axis=1)
    nr = np.linalg.norm(vhat, axis=1)
    ok = (nv > 0) & (nr > 0)
    excluded = int(np.sum(~ok))
    if not np.any(ok):
        raise ValueError("all rows have zero-norm input or reconstruction")
    cos = np.sum(v[ok] * vhat[ok], axis=1) / (nv[ok] * nr[ok])
    return ReconSimilarity(mean_cosine=float(np.mean(cos)), excluded=excluded)
