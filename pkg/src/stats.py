"""
Spectral Statistics

Statistics of eigenvalue and singular value samples: empirical spectral
distributions, interval counts against the Marchenko-Pastur law,
delocalization of singular vectors, eigenvalue gaps, the Q_i spacing sum,
the regularized gap, soft-edge normalization, Kolmogorov-Smirnov distances
and concentration of random projections.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pandas as pd
import scipy.linalg
from numpy.typing import ArrayLike

from src.constants import CSV_FLOAT_FORMAT, DEFAULT_BINS, PROJECTION_T_MULTIPLES
from src.ensembles import DistributionSpec, gaussian_complex, gaussian_real, sample_array
from src.exceptions import (
    DegenerateSpectrumError,
    DomainError,
    EmptySampleError,
    HardEdgeError,
    IndexConstraintError,
    InvalidInputError,
    ShapeError,
    UnsortedInputError,
)
from src.logging_config import get_logger
from src.mp_law import MPModel, cdf, cdf_values, stieltjes
from src.spectra import SpectralDecomposition

logger = get_logger(__name__)

TWConvention = Literal["standard", "literal"]
GapScale = Literal["eigenvalue", "sigma"]

# Reserved trial index for the fixed random subspace of projection tests.
_SUBSPACE_TRIAL = (1 << 64) - 1


def _finite_vector(values: ArrayLike, name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptySampleError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def _check_sorted(arr: np.ndarray) -> None:
    if arr.size > 1 and np.any(np.diff(arr) < 0):
        raise UnsortedInputError(details={"first_descent": int(np.argmax(np.diff(arr) < 0))})


# ============================================================================
# Empirical distributions
# ============================================================================

@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Sorted sample with its right-continuous ecdf."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.sort(_finite_vector(self.values))
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def ecdf(self, x: ArrayLike) -> float | np.ndarray:
        """Fraction of values <= x."""
        result = np.searchsorted(self.values, np.asarray(x, dtype=np.float64), side="right") / self.size
        return float(result) if np.ndim(result) == 0 else result

    def histogram(self, bins: int = DEFAULT_BINS, range_: tuple[float, float] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Bin edges and densities count / (size * width)."""
        edges = _bin_edges(self.values, self.values, bins) if range_ is None else np.linspace(*range_, bins + 1)
        counts, edges = np.histogram(self.values, bins=edges)
        return edges, counts / (self.size * np.diff(edges))

    def pdf_frame(self, bins: int = DEFAULT_BINS) -> pd.DataFrame:
        edges, densities = self.histogram(bins)
        return pd.DataFrame({"x": (edges[:-1] + edges[1:]) / 2, "pdf": densities})

    def cdf_frame(self) -> pd.DataFrame:
        xs = np.unique(self.values)
        return pd.DataFrame({"x": xs, "cdf": self.ecdf(xs)})

    def sup_distance(self, reference_cdf: Callable[[np.ndarray], np.ndarray]) -> float:
        """sup_x |ecdf(x) - F(x)|, attained at a jump of the ecdf (from either side)."""
        xs = np.unique(self.values)
        reference = np.asarray(reference_cdf(xs), dtype=np.float64)
        upper = np.searchsorted(self.values, xs, side="right") / self.size
        lower = np.searchsorted(self.values, xs, side="left") / self.size
        return float(max(np.max(np.abs(upper - reference)), np.max(np.abs(lower - reference))))


def esd(lambdas: ArrayLike) -> EmpiricalDistribution:
    """Empirical spectral distribution (1/p) #{j : lambda_j <= x}."""
    return EmpiricalDistribution(_finite_vector(lambdas, "lambdas"))


def mp_sup_distance(lambdas: ArrayLike, model: MPModel) -> float:
    """Kolmogorov distance between the ESD and the Marchenko-Pastur CDF."""
    return esd(lambdas).sup_distance(lambda xs: cdf_values(model, xs))


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    """CSV with a header row and 12 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path


def _bin_edges(lo_values: np.ndarray, hi_values: np.ndarray, bins: int) -> np.ndarray:
    if bins < 1:
        raise DomainError("bins must be positive", details={"bins": bins})
    lo, hi = float(np.min(lo_values)), float(np.max(hi_values))
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, bins + 1)


def aligned_histograms(samples: Mapping[str, ArrayLike], bins: int = DEFAULT_BINS) -> pd.DataFrame:
    """
    Histogram densities of several samples on bins spanning the pooled range.

    Columns: x (bin centers), then pdf_<name> per sample with density
    count / (size * width).
    """
    arrays = {name: _finite_vector(values, name) for name, values in samples.items()}
    pooled = np.concatenate(list(arrays.values()))
    edges = _bin_edges(pooled, pooled, bins)
    frame = pd.DataFrame({"x": (edges[:-1] + edges[1:]) / 2})
    for name, values in arrays.items():
        counts, _ = np.histogram(values, bins=edges)
        frame[f"pdf_{name}"] = counts / (values.size * np.diff(edges))
    return frame


def aligned_ecdfs(samples: Mapping[str, ArrayLike]) -> pd.DataFrame:
    """Columns: x (pooled distinct values), then cdf_<name> per sample."""
    dists = {name: esd(values) for name, values in samples.items()}
    xs = np.unique(np.concatenate([d.values for d in dists.values()]))
    frame = pd.DataFrame({"x": xs})
    for name, dist in dists.items():
        frame[f"cdf_{name}"] = dist.ecdf(xs)
    return frame


def ks_distance(A: EmpiricalDistribution | ArrayLike, B: EmpiricalDistribution | ArrayLike) -> float:
    """sup_x |F_A(x) - F_B(x)| evaluated exactly over the merged sample."""
    a = A if isinstance(A, EmpiricalDistribution) else EmpiricalDistribution(A)
    b = B if isinstance(B, EmpiricalDistribution) else EmpiricalDistribution(B)
    merged = np.concatenate([a.values, b.values])
    return float(np.max(np.abs(a.ecdf(merged) - b.ecdf(merged))))


# ============================================================================
# Concentration of the ESD
# ============================================================================

@dataclass
class IntervalReport:
    """Eigenvalue count N_I on an interval against p times its MP mass."""

    lo: float
    hi: float
    count: int
    expected: float
    deviation: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def to_dict(self) -> dict[str, Any]:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "count": self.count,
            "expected": self.expected,
            "deviation": self.deviation,
        }


def concentration_report(
    lambdas: ArrayLike,
    model: MPModel,
    interval_len: float,
    intervals: Sequence[tuple[float, float]] | None = None,
) -> list[IntervalReport]:
    """
    |N_I - p * mass_MP(I)| / (p |I|) for contiguous intervals covering [a, b].

    The partition intervals are half-open except the last, which is closed at
    b and may be shorter than `interval_len`. Explicit `intervals` are closed.
    """
    if not interval_len > 0:
        raise DomainError("interval_len must be positive", details={"interval_len": interval_len})
    values = np.sort(_finite_vector(lambdas, "lambdas"))
    p = values.size

    if intervals is None:
        count = max(1, math.ceil((model.b - model.a) / interval_len - 1e-12))
        edges = np.minimum(model.a + interval_len * np.arange(count + 1), model.b)
        edges[-1] = model.b
        bounds = list(zip(edges[:-1], edges[1:]))
        closed = [False] * (len(bounds) - 1) + [True]
    else:
        bounds = [(float(lo), float(hi)) for lo, hi in intervals]
        closed = [True] * len(bounds)

    reports = []
    for (lo, hi), is_closed in zip(bounds, closed):
        if hi <= lo:
            raise DomainError("Interval must have positive length", details={"lo": lo, "hi": hi})
        side = "right" if is_closed else "left"
        n_i = int(np.searchsorted(values, hi, side=side) - np.searchsorted(values, lo, side="left"))
        expected = p * (cdf(model, hi) - cdf(model, lo))
        reports.append(
            IntervalReport(
                lo=float(lo),
                hi=float(hi),
                count=n_i,
                expected=expected,
                deviation=abs(n_i - expected) / (p * (hi - lo)),
            )
        )
    return reports


# ============================================================================
# Delocalization, gaps and spacing sums
# ============================================================================

def delocalization_stat(decomp: SpectralDecomposition) -> float:
    """sqrt(n) times the largest coordinate magnitude over all singular vectors."""
    largest = max(float(np.max(np.abs(decomp.right_vectors))), float(np.max(np.abs(decomp.left_vectors))))
    return math.sqrt(decomp.n) * largest


@dataclass
class GapSummary:
    """Consecutive gaps of an ascending spectrum."""

    min_gap: float
    normalized_gaps: np.ndarray
    quantiles: dict[str, float]
    argmin: int
    scale: str = "eigenvalue"

    @property
    def min_normalized(self) -> float:
        return float(self.normalized_gaps.min())

    @property
    def at_edge(self) -> bool:
        """True when the smallest gap touches the first or last value."""
        return self.argmin in (1, self.normalized_gaps.size)

    @property
    def has_zero_gap(self) -> bool:
        return self.min_gap == 0.0

    def fraction_below(self, threshold: float) -> float:
        return float(np.mean(self.normalized_gaps < threshold))

    def to_dict(self) -> dict[str, Any]:
        return {
            "min_gap": self.min_gap,
            "min_normalized": self.min_normalized,
            "argmin": self.argmin,
            "at_edge": self.at_edge,
            "quantiles": self.quantiles,
            "scale": self.scale,
        }


_GAP_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def gap_stats(values: ArrayLike, n: int, scale: GapScale = "eigenvalue") -> GapSummary:
    """
    Consecutive gaps of ascending eigenvalues, normalized by n.

    With scale="sigma" the input is read as ascending singular values and
    gaps are normalized by sqrt(p + n) instead.
    """
    arr = _finite_vector(values, "values")
    if arr.size < 2:
        raise InvalidInputError("At least two values are needed for gaps", details={"size": arr.size})
    _check_sorted(arr)
    gaps = np.diff(arr)
    factor = float(n) if scale == "eigenvalue" else math.sqrt(arr.size + n)
    normalized = factor * gaps
    j = int(np.argmin(gaps))
    return GapSummary(
        min_gap=float(gaps[j]),
        normalized_gaps=normalized,
        quantiles={f"q{int(q * 100):02d}": float(np.quantile(normalized, q)) for q in _GAP_QUANTILES},
        argmin=j + 1,
        scale=scale,
    )


def regularized_gap(sigmas: ArrayLike, i0: int, l: int, C1: float, p: int, n: int) -> float:
    """
    Infimum over 1 <= i- <= i0 - l < i0 <= i+ <= p of

        sqrt(N0) (sigma_{i+} - sigma_{i-}) / min(i+ - i-, log^C1 N0)^(log^0.9 N0)

    with N0 = p + n and natural logarithms, by direct enumeration.
    """
    sig = _finite_vector(sigmas, "sigmas")
    if sig.size != p:
        raise ShapeError("Expected p singular values", details={"given": sig.size, "p": p})
    if not (1 <= i0 - l < i0 <= p):
        raise IndexConstraintError(details={"i0": i0, "l": l, "p": p})
    _check_sorted(sig)
    n0 = p + n
    log_n0 = math.log(n0)
    cap = log_n0**C1
    exponent = log_n0**0.9

    lower = np.arange(1, i0 - l + 1)
    upper = np.arange(i0, p + 1)
    i_minus, i_plus = np.meshgrid(lower, upper, indexing="ij")
    numerator = math.sqrt(n0) * (sig[i_plus - 1] - sig[i_minus - 1])
    denominator = np.minimum(i_plus - i_minus, cap) ** exponent
    return float(np.min(numerator / denominator))


def q_index(sigmas: ArrayLike, i: int, p: int, n: int) -> float:
    """
    Q_i = (1/n) [ sum_{j != i} |sigma_j - sigma_i|^-2 + (n - p) / sigma_i^2
                  + sum_j |sigma_j + sigma_i|^-2 ].
    """
    sig = _finite_vector(sigmas, "sigmas")
    if sig.size != p:
        raise ShapeError("Expected p singular values", details={"given": sig.size, "p": p})
    if not 1 <= i <= p:
        raise IndexConstraintError(details={"i": i, "p": p})
    target = sig[i - 1]
    if target <= 0:
        raise DomainError("sigma_i must be positive", details={"i": i, "sigma_i": float(target)})
    others = np.delete(sig, i - 1)
    if np.any(others == target):
        raise DegenerateSpectrumError("sigma_i coincides with another singular value", index=i)
    total = np.sum(1.0 / (others - target) ** 2) + (n - p) / target**2 + np.sum(1.0 / (sig + target) ** 2)
    return float(total / n)


def tw_normalize(sigma_min_sq: ArrayLike, p: int, n: int, convention: TWConvention = "standard") -> float | np.ndarray:
    """
    Soft-edge normalization of the smallest squared singular value.

    standard: (x - c) / s with c = (sqrt n - sqrt p)^2 and
    s = (sqrt n - sqrt p)(1/sqrt p - 1/sqrt n)^(1/3).
    literal: center sqrt p - sqrt n and scale (sqrt p - sqrt n)(p^-1/2 - n^-1/2)^(1/3),
    kept for comparison only.
    """
    if p > n:
        raise ShapeError("Requires p <= n", details={"p": p, "n": n})
    if p == n:
        raise HardEdgeError(details={"p": p, "n": n})
    rp, rn = math.sqrt(p), math.sqrt(n)
    if convention == "standard":
        center = (rn - rp) ** 2
        scale = (rn - rp) * np.cbrt(1.0 / rp - 1.0 / rn)
    elif convention == "literal":
        center = rp - rn
        scale = (rp - rn) * np.cbrt(1.0 / rp - 1.0 / rn)
    else:
        raise DomainError(f"Unknown convention {convention!r}")
    result = (np.asarray(sigma_min_sq, dtype=np.float64) - center) / scale
    return float(result) if result.ndim == 0 else result


# ============================================================================
# Stieltjes transform of the ESD
# ============================================================================

def empirical_stieltjes(lambdas: ArrayLike, z: complex) -> complex:
    """(1/p) sum 1 / (lambda_j - z)."""
    values = _finite_vector(lambdas, "lambdas")
    z = complex(z)
    if z.imag == 0.0 and np.any(values == z.real):
        raise DomainError("z coincides with an eigenvalue", details={"z": str(z)})
    return complex(np.mean(1.0 / (values - z)))


def stieltjes_deviation(lambdas: ArrayLike, model: MPModel, zs: Sequence[complex]) -> float:
    """Largest |s_ESD(z) - s_MP(z)| over the given points."""
    return max(abs(empirical_stieltjes(lambdas, z) - stieltjes(model, z)) for z in zs)


# ============================================================================
# Projection concentration
# ============================================================================

@dataclass
class ProjectionSummary:
    """Distribution of ||pi_H X|| - sqrt(d) over independent draws of X."""

    n: int
    d: int
    K: float
    deviations: EmpiricalDistribution
    mean_sq_norm: float
    thresholds: list[float]
    exceedance: list[float]
    tail_bound: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "d": self.d,
            "K": self.K,
            "trials": self.deviations.size,
            "mean_sq_norm": self.mean_sq_norm,
            "thresholds": self.thresholds,
            "exceedance": self.exceedance,
            "tail_bound": self.tail_bound,
        }


def default_projection_bound(spec: DistributionSpec, n: int) -> float:
    """Support radius for bounded laws; sqrt(2 log n) + 1 for unbounded ones."""
    radius = spec.support_radius
    if math.isfinite(radius):
        return max(radius, 1.0)
    return math.sqrt(2.0 * math.log(max(n, 2))) + 1.0


def random_subspace(n: int, d: int, seed: int, complex_: bool) -> np.ndarray:
    """Orthonormal n x d basis of a Haar-random subspace, fixed by the seed."""
    gaussian = gaussian_complex() if complex_ else gaussian_real()
    G = sample_array(gaussian, n * d, seed, _SUBSPACE_TRIAL).reshape(n, d)
    Q, _ = scipy.linalg.qr(G, mode="economic")
    return Q


def projection_concentration(
    spec: DistributionSpec,
    n: int,
    d: int,
    trials: int,
    seed: int,
    K: float | None = None,
) -> ProjectionSummary:
    """
    Project X in C^n with iid entries onto a fixed random d-dimensional
    subspace and record ||pi_H X|| - sqrt(d) per draw, together with the
    fraction of draws with |deviation| >= t for t in {1, ..., 10} K.
    """
    if not 1 <= d <= n:
        raise DomainError("Requires 1 <= d <= n", details={"d": d, "n": n})
    if trials < 1:
        raise DomainError("trials must be positive", details={"trials": trials})
    bound = default_projection_bound(spec, n) if K is None else float(K)
    basis = random_subspace(n, d, seed, spec.is_complex)

    draws = np.stack([sample_array(spec, n, seed, trial) for trial in range(trials)])
    norms = np.linalg.norm(draws @ basis.conj(), axis=1)
    deviations = norms - math.sqrt(d)

    thresholds = [k * bound for k in PROJECTION_T_MULTIPLES]
    exceedance = [float(np.mean(np.abs(deviations) >= t)) for t in thresholds]
    tail_bound = [10.0 * math.exp(-(t**2) / (10.0 * bound**2)) for t in thresholds]
    logger.debug("Projection concentration", extra_fields={"n": n, "d": d, "K": bound, "trials": trials})
    return ProjectionSummary(
        n=n,
        d=d,
        K=bound,
        deviations=EmpiricalDistribution(deviations),
        mean_sq_norm=float(np.mean(norms**2)),
        thresholds=thresholds,
        exceedance=exceedance,
        tail_bound=tail_bound,
    )
