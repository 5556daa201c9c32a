"""
Marchenko-Pastur Law

Closed-form machinery for the limiting spectral law of W = M*M / n at aspect
ratio y = p/n in (0, 1]: density, distribution function, quantiles, the
Stieltjes transform on its physical branch, and principal-value integrals
of y x rho(x) / (x - lambda) at and away from the spectral edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike
from scipy.integrate import quad
from scipy.optimize import bisect

from src.constants import (
    CDF_ABS_TOL,
    FUNCTIONAL_DENOMINATOR_TOL,
    PV_EXCISION_START,
    PV_QUAD_LIMIT,
    QUANTILE_XTOL,
)
from src.exceptions import BranchCutError, DegenerateDenominatorError, DomainError
from src.logging_config import get_logger

logger = get_logger(__name__)

PVMethod = Literal["excision", "qawc"]


@dataclass(frozen=True)
class MPModel:
    """Aspect ratio y with edges a = (1 - sqrt y)^2 and b = (1 + sqrt y)^2."""

    y: float

    def __post_init__(self) -> None:
        if not (isinstance(self.y, (int, float, np.floating)) and 0.0 < float(self.y) <= 1.0):
            raise DomainError("Aspect ratio y must lie in (0, 1]", details={"y": self.y})
        object.__setattr__(self, "y", float(self.y))

    @classmethod
    def from_shape(cls, p: int, n: int) -> MPModel:
        return cls(p / n)

    @property
    def a(self) -> float:
        return (1.0 - math.sqrt(self.y)) ** 2

    @property
    def b(self) -> float:
        return (1.0 + math.sqrt(self.y)) ** 2

    @property
    def hard_edge(self) -> bool:
        """True at y = 1, where the lower edge a = 0 carries a 1/sqrt(x) singularity."""
        return self.y == 1.0


# ============================================================================
# Density, CDF and quantiles
# ============================================================================

def density(model: MPModel, x: ArrayLike) -> float | np.ndarray:
    """
    rho(x) = sqrt((b - x)(x - a)) / (2 pi x y) on [a, b], zero outside.

    At the hard edge (y = 1, x = 0) the value is +inf, an integrable singularity.
    """
    xs = np.asarray(x, dtype=np.float64)
    a, b, y = model.a, model.b, model.y
    inside = (xs >= a) & (xs <= b)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.sqrt(np.clip((b - xs) * (xs - a), 0.0, None)) / (2.0 * math.pi * xs * y)
    values = np.where(inside, values, 0.0)
    if model.hard_edge:
        values = np.where(inside & (xs == 0.0), np.inf, values)
    return float(values) if values.ndim == 0 else values


def _half_angle_integrand(model: MPModel, power: int):
    # x = a + 4 sqrt(y) cos^2(phi) maps phi in [0, pi/2] onto [b, a];
    # rho dx becomes (16 / pi) sin^2 cos^2 / x dphi, regular at both edges.
    a, k = model.a, 4.0 * math.sqrt(model.y)

    def integrand(phi: float) -> float:
        c2 = math.cos(phi) ** 2
        s2 = math.sin(phi) ** 2
        x = a + k * c2
        if power == 0:
            return 16.0 * s2 * c2 / (math.pi * x)
        return 16.0 * s2 * c2 * x ** (power - 1) / math.pi

    return integrand


def _phi_of(model: MPModel, x: float) -> float:
    c2 = (x - model.a) / (4.0 * math.sqrt(model.y))
    return math.acos(math.sqrt(min(max(c2, 0.0), 1.0)))


def cdf(model: MPModel, x: float, epsabs: float = CDF_ABS_TOL) -> float:
    """Integral of rho from a to min(x, b) by adaptive quadrature in the half-angle variable."""
    x = float(x)
    if x <= model.a:
        return 0.0
    if x >= model.b:
        return 1.0
    value, _ = quad(
        _half_angle_integrand(model, 0),
        _phi_of(model, x),
        math.pi / 2,
        epsabs=epsabs,
        epsrel=0.0,
        limit=PV_QUAD_LIMIT,
    )
    return min(max(value, 0.0), 1.0)


def cdf_values(model: MPModel, xs: ArrayLike) -> np.ndarray:
    """`cdf` evaluated elementwise."""
    flat = np.asarray(xs, dtype=np.float64)
    return np.array([cdf(model, x) for x in flat.ravel()]).reshape(flat.shape)


def moment(model: MPModel, k: int) -> float:
    """Integral of x^k rho(x) dx over [a, b]."""
    if k < 0:
        raise DomainError("Moment order must be nonnegative", details={"k": k})
    value, _ = quad(
        _half_angle_integrand(model, k), 0.0, math.pi / 2, epsabs=CDF_ABS_TOL, epsrel=0.0, limit=PV_QUAD_LIMIT
    )
    return value


def quantile(model: MPModel, q: float, xtol: float = QUANTILE_XTOL) -> float:
    """Bisection on `cdf`; quantile(0) = a and quantile(1) = b."""
    if not 0.0 <= q <= 1.0:
        raise DomainError("Quantile level must lie in [0, 1]", details={"q": q})
    if q == 0.0:
        return model.a
    if q == 1.0:
        return model.b
    return float(bisect(lambda x: cdf(model, x) - q, model.a, model.b, xtol=xtol, maxiter=200))


# ============================================================================
# Stieltjes transform
# ============================================================================

def stieltjes(model: MPModel, z: complex) -> complex:
    """
    s(z) = -(y + z - 1 - R) / (2 y z) with R = sqrt(z - a) sqrt(z - b).

    Principal roots of the two factors cut the plane along [a, b] and make
    R ~ z at infinity. The equivalent form -2 / (y + z - 1 + R) is used to
    avoid cancellation.
    """
    z = complex(z)
    a, b, y = model.a, model.b, model.y
    if z.imag == 0.0 and a <= z.real <= b:
        raise BranchCutError(details={"z": str(z), "support": [a, b]})
    root = np.sqrt(complex(z - a)) * np.sqrt(complex(z - b))
    return complex(-2.0 / (y + z - 1.0 + root))


def verify_functional_equation(model: MPModel, z: complex) -> float:
    """|s + 1 / (y + z - 1 + y z s)|."""
    z = complex(z)
    s = stieltjes(model, z)
    denominator = model.y + z - 1.0 + model.y * z * s
    if abs(denominator) < FUNCTIONAL_DENOMINATOR_TOL:
        raise DegenerateDenominatorError(details={"z": str(z), "denominator": abs(denominator)})
    return abs(s + 1.0 / denominator)


# ============================================================================
# Principal-value edge integrals
# ============================================================================

def _numerator(model: MPModel, x: float) -> float:
    # y x rho(x) = sqrt((b - x)(x - a)) / (2 pi)
    return math.sqrt(max((model.b - x) * (x - model.a), 0.0)) / (2.0 * math.pi)


def pv_closed_form(model: MPModel, lam: float) -> float:
    """(1 + y - lambda) / 2 on [a, b]; y (1 + lambda s(lambda)) outside."""
    lam = float(lam)
    if model.a <= lam <= model.b:
        return (1.0 + model.y - lam) / 2.0
    return float((model.y * (1.0 + lam * stieltjes(model, lam))).real)


def _excised(model: MPModel, lam: float, eps: float, half_width: float) -> float:
    a, b = model.a, model.b

    def paired(t: float) -> float:
        return (_numerator(model, lam + t) - _numerator(model, lam - t)) / t

    inner, _ = quad(paired, eps, half_width, limit=PV_QUAD_LIMIT, epsabs=1e-13, epsrel=1e-12)

    outer = 0.0
    if lam - half_width > a:
        # sqrt(x - a) weight on [a, lam - h]
        outer, _ = quad(
            lambda x: math.sqrt(b - x) / (2.0 * math.pi * (x - lam)),
            a, lam - half_width, weight="alg", wvar=(0.5, 0.0), limit=PV_QUAD_LIMIT,
        )
    elif lam + half_width < b:
        outer, _ = quad(
            lambda x: math.sqrt(x - a) / (2.0 * math.pi * (x - lam)),
            lam + half_width, b, weight="alg", wvar=(0.0, 0.5), limit=PV_QUAD_LIMIT,
        )
    return inner + outer


def pv_edge_integral(model: MPModel, lam: float, method: PVMethod = "excision") -> float:
    """
    Principal value of the integral of y x rho(x) / (x - lambda) over [a, b].

    Edges use algebraic-weight quadrature (the integrand is integrable there),
    exterior points are ordinary integrals, and interior points use symmetric
    excision around lambda with one Richardson step in the excision radius.
    method="qawc" evaluates interior points with the QUADPACK Cauchy weight.
    """
    lam = float(lam)
    a, b = model.a, model.b
    width = b - a
    edge_tol = 1e-12 * max(1.0, b)

    if abs(lam - a) <= edge_tol:
        value, _ = quad(lambda x: 1.0 / (2.0 * math.pi), a, b, weight="alg", wvar=(-0.5, 0.5))
        return value
    if abs(lam - b) <= edge_tol:
        value, _ = quad(lambda x: -1.0 / (2.0 * math.pi), a, b, weight="alg", wvar=(0.5, -0.5))
        return value
    if lam < a or lam > b:
        value, _ = quad(
            lambda x: 1.0 / (2.0 * math.pi * (x - lam)),
            a, b, weight="alg", wvar=(0.5, 0.5), limit=PV_QUAD_LIMIT,
        )
        return value

    if method == "qawc":
        value, _ = quad(lambda x: _numerator(model, x), a, b, weight="cauchy", wvar=lam, limit=PV_QUAD_LIMIT)
        return value
    if method != "excision":
        raise DomainError(f"Unknown principal-value method {method!r}")

    half_width = min(lam - a, b - lam)
    eps = PV_EXCISION_START * half_width
    coarse = _excised(model, lam, eps, half_width)
    fine = _excised(model, lam, eps / 2.0, half_width)
    estimate = 2.0 * fine - coarse
    logger.debug(
        "Principal value by excision",
        extra_fields={"lambda": lam, "eps": eps, "richardson_shift": estimate - fine, "support_width": width},
    )
    return estimate
