"""
Entry Distributions

Construction, exact moment bookkeeping and reproducible sampling of the
entry laws used to build random p x n matrices: independent entries with
mean zero and unit variance, real or complex.

Built-in laws are addressable by name:
    gaussian_real (gaussian, normal), gaussian_complex, rademacher
    (bernoulli), rademacher_complex, gauss4,
    match3:m3=<v>, atomic:<v>@<p>,<v>@<p>,...,
    gauss-div:t=<v>:base=<name>, trunc:K=<v>:base=<name>,
    trunc:C0=<v>:n=<v>:base=<name>

A bare base runs to the end of the name, so it must come last. Written
as base=(<name>) it may appear anywhere and nest.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from itertools import product
from typing import Any

import numpy as np
import sympy
from scipy import stats as sp_stats
from scipy.special import gammainc

from src.constants import (
    MAX_MOMENT_ORDER,
    MOMENT_TOL,
    PROBABILITY_SUM_TOL,
    REJECTION_MAX_ROUNDS,
    TRUNCATION_EXPONENT,
    WORDS_COMPLEX,
    WORDS_REAL,
)
from src.exceptions import (
    DomainError,
    InvalidInputError,
    RejectionLimitError,
    ShapeError,
    UnknownEnsembleError,
    UnsupportedOrderError,
)
from src.logging_config import get_logger
from src.rng import CounterStream, check_u64, words_to_normal, words_to_uniform

logger = get_logger(__name__)

Atoms = tuple[tuple[sympy.Expr, sympy.Expr], ...]
MomentTable = Mapping[tuple[int, int], sympy.Expr]

_HALF = sympy.Rational(1, 2)
_SQRT_HALF = math.sqrt(0.5)


class EnsembleKind(str, Enum):
    """Entry law families."""
    GAUSSIAN_REAL = "gaussian_real"
    GAUSSIAN_COMPLEX = "gaussian_complex"
    RADEMACHER = "rademacher"
    ATOMIC_REAL = "atomic_real"
    ATOMIC_COMPLEX = "atomic_complex"
    GAUSSIAN_DIVISIBLE = "gaussian_divisible"
    TRUNCATED = "truncated"


class Normalization(str, Enum):
    """Real laws have variance 1; complex laws split it 1/2 + 1/2 with no correlation."""
    R_NORMALIZED = "r_normalized"
    C_NORMALIZED = "c_normalized"


_ATOMIC_KINDS = (EnsembleKind.RADEMACHER, EnsembleKind.ATOMIC_REAL, EnsembleKind.ATOMIC_COMPLEX)


def exact_number(value: Any) -> sympy.Expr:
    """
    Convert a user value to an exact sympy number.

    Floats are read through their shortest decimal repr, so 0.1 becomes 1/10.
    Strings accept rationals ("4/5") and closed forms ("sqrt(3)").
    """
    if isinstance(value, sympy.Basic):
        return value
    if isinstance(value, bool):
        raise InvalidInputError("Booleans are not numbers", details={"value": value})
    if isinstance(value, (int, np.integer)):
        return sympy.Integer(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise DomainError("Value must be finite", details={"value": float(value)})
        return sympy.Rational(repr(float(value)))
    if isinstance(value, str):
        text = value.strip()
        try:
            return sympy.Rational(text)
        except (TypeError, ValueError):
            pass
        try:
            expr = sympy.sympify(text, rational=True)
        except (sympy.SympifyError, SyntaxError, TypeError) as e:
            raise InvalidInputError(f"Cannot parse number {value!r}") from e
        if not expr.is_number or not expr.is_real:
            raise InvalidInputError(f"Not a real number: {value!r}")
        return expr
    raise InvalidInputError(f"Unsupported numeric value {value!r}")


def _to_float(expr: sympy.Expr) -> float:
    return float(sympy.N(expr, 30))


def _gaussian_moment(k: int, variance: sympy.Expr) -> sympy.Expr:
    if k % 2:
        return sympy.Integer(0)
    if k == 0:
        return sympy.Integer(1)
    return variance ** (k // 2) * sympy.factorial2(k - 1)


def _atom_moment(atoms: Atoms, k: int) -> sympy.Expr:
    return sympy.Add(*[prob * value**k for value, prob in atoms])


def _orders() -> list[tuple[int, int]]:
    return [(m, l) for m in range(MAX_MOMENT_ORDER + 1) for l in range(MAX_MOMENT_ORDER + 1 - m)]


@dataclass(frozen=True)
class DistributionSpec:
    """
    An entry law with exact moment metadata.

    Immutable and hashable; aliases of the same law compare equal because
    `name` is excluded from comparison.
    """

    kind: EnsembleKind
    normalization: Normalization
    atoms: Atoms = ()
    im_atoms: Atoms = ()
    t: sympy.Expr | None = None
    base: DistributionSpec | None = None
    bound: float | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.kind in _ATOMIC_KINDS:
            self._check_atoms(self.atoms, "atoms")
            if self.kind == EnsembleKind.ATOMIC_COMPLEX:
                self._check_atoms(self.im_atoms, "im_atoms")
            self._check_standardized()
        elif self.kind == EnsembleKind.GAUSSIAN_DIVISIBLE:
            if self.base is None or self.t is None:
                raise DomainError("gaussian_divisible needs t and base")
            t = _to_float(self.t)
            if not 0.0 < t < 1.0:
                raise DomainError("t must lie strictly inside (0, 1)", details={"t": t})
            if self.base.kind == EnsembleKind.TRUNCATED:
                raise DomainError("Truncation must be the outermost operation")
        elif self.kind == EnsembleKind.TRUNCATED:
            if self.base is None or self.bound is None:
                raise DomainError("truncated needs base and bound")
            if not (self.bound > 0 and math.isfinite(self.bound)):
                raise DomainError("Truncation bound must be positive and finite", details={"bound": self.bound})

    @staticmethod
    def _check_atoms(atoms: Atoms, label: str) -> None:
        if not atoms:
            raise DomainError(f"{label} must not be empty")
        probs = [_to_float(prob) for _, prob in atoms]
        if any(prob < 0 for prob in probs):
            raise DomainError("Atom probabilities must be nonnegative", details={label: probs})
        if abs(sum(probs) - 1.0) > PROBABILITY_SUM_TOL:
            raise DomainError("Atom probabilities must sum to 1", details={"sum": sum(probs)})

    def _check_standardized(self) -> None:
        if not self.standardized:
            raise DomainError(
                "Entry law must have mean 0 and variance 1",
                details={"mean": self.moment(1, 0) + 1j * self.moment(0, 1), "variance": self.variance},
            )

    # ------------------------------------------------------------------
    # Derived properties
    # ------------------------------------------------------------------

    @property
    def is_complex(self) -> bool:
        return self.normalization == Normalization.C_NORMALIZED

    @property
    def approximate(self) -> bool:
        """True when the moment table is numerical rather than exact."""
        if self.kind == EnsembleKind.TRUNCATED:
            return self.base.kind not in _ATOMIC_KINDS or self.base.approximate
        if self.kind == EnsembleKind.GAUSSIAN_DIVISIBLE:
            return self.base.approximate
        return False

    @property
    def word_width(self) -> int:
        """Counter-stream words consumed per entry."""
        if self.kind in (EnsembleKind.GAUSSIAN_REAL, EnsembleKind.RADEMACHER, EnsembleKind.ATOMIC_REAL):
            return WORDS_REAL
        if self.kind in (EnsembleKind.GAUSSIAN_COMPLEX, EnsembleKind.ATOMIC_COMPLEX):
            return WORDS_COMPLEX
        if self.kind == EnsembleKind.GAUSSIAN_DIVISIBLE:
            return self.base.word_width + (WORDS_COMPLEX if self.is_complex else WORDS_REAL)
        return self.base.word_width

    @property
    def support_radius(self) -> float:
        """Largest possible |zeta|; infinite for unbounded laws."""
        if self.kind in (EnsembleKind.RADEMACHER, EnsembleKind.ATOMIC_REAL):
            return max(abs(_to_float(v)) for v, _ in self.atoms)
        if self.kind == EnsembleKind.ATOMIC_COMPLEX:
            re = max(abs(_to_float(v)) for v, _ in self.atoms)
            im = max(abs(_to_float(v)) for v, _ in self.im_atoms)
            return math.hypot(re, im)
        if self.kind == EnsembleKind.TRUNCATED:
            return min(self.bound, self.base.support_radius)
        return math.inf

    @cached_property
    def moment_table(self) -> MomentTable:
        """Mixed moments E[Re^m Im^l] for all m + l <= 4."""
        return {order: self._moment_expr(*order) for order in _orders()}

    def moment(self, m: int, l: int) -> float:
        return _to_float(self.moment_table[(m, l)])

    @property
    def variance(self) -> float:
        """E|zeta|^2 minus |E zeta|^2."""
        mean_sq = self.moment(1, 0) ** 2 + self.moment(0, 1) ** 2
        return self.moment(2, 0) + self.moment(0, 2) - mean_sq

    @property
    def fourth_absolute_moment(self) -> float:
        """E|zeta|^4."""
        return self.moment(4, 0) + 2 * self.moment(2, 2) + self.moment(0, 4)

    @property
    def standardized(self) -> bool:
        ok = (
            abs(self.moment(1, 0)) <= MOMENT_TOL
            and abs(self.moment(0, 1)) <= MOMENT_TOL
            and abs(self.moment(2, 0) + self.moment(0, 2) - 1.0) <= MOMENT_TOL
        )
        if ok and self.is_complex:
            ok = (
                abs(self.moment(2, 0) - 0.5) <= MOMENT_TOL
                and abs(self.moment(0, 2) - 0.5) <= MOMENT_TOL
                and abs(self.moment(1, 1)) <= MOMENT_TOL
            )
        return ok

    @cached_property
    def _sampling_tables(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        tables = []
        for atoms in (self.atoms, self.im_atoms):
            if not atoms:
                continue
            values = np.array([_to_float(v) for v, _ in atoms])
            cumulative = np.cumsum([_to_float(p) for _, p in atoms])
            cumulative[-1] = 1.0
            tables.append((values, cumulative))
        return tuple(tables)

    # ------------------------------------------------------------------
    # Moment tables
    # ------------------------------------------------------------------

    def _moment_expr(self, m: int, l: int) -> sympy.Expr:
        kind = self.kind
        if kind == EnsembleKind.GAUSSIAN_REAL:
            return _gaussian_moment(m, sympy.Integer(1)) if l == 0 else sympy.Integer(0)
        if kind == EnsembleKind.GAUSSIAN_COMPLEX:
            return _gaussian_moment(m, _HALF) * _gaussian_moment(l, _HALF)
        if kind in (EnsembleKind.RADEMACHER, EnsembleKind.ATOMIC_REAL):
            return _atom_moment(self.atoms, m) if l == 0 else sympy.Integer(0)
        if kind == EnsembleKind.ATOMIC_COMPLEX:
            return _atom_moment(self.atoms, m) * _atom_moment(self.im_atoms, l)
        if kind == EnsembleKind.GAUSSIAN_DIVISIBLE:
            return self._divisible_moment(m, l)
        return self._truncated_moment(m, l)

    def _divisible_moment(self, m: int, l: int) -> sympy.Expr:
        # Re and Im are each alpha * base + beta * gaussian with independent parts.
        alpha = sympy.sqrt(1 - self.t)
        beta = sympy.sqrt(self.t)
        gaussian = gaussian_complex() if self.is_complex else gaussian_real()
        total = sympy.Integer(0)
        for a, b in product(range(m + 1), range(l + 1)):
            total += (
                sympy.binomial(m, a)
                * sympy.binomial(l, b)
                * alpha ** (a + b)
                * beta ** (m - a + l - b)
                * self.base.moment_table[(a, b)]
                * gaussian.moment_table[(m - a, l - b)]
            )
        return sympy.expand(total)

    def _truncated_moment(self, m: int, l: int) -> sympy.Expr:
        base = self.base
        bound = self.bound
        if base.kind in (EnsembleKind.RADEMACHER, EnsembleKind.ATOMIC_REAL):
            kept = _kept_atoms(base.atoms, bound)
            return _atom_moment(kept, m) if l == 0 else sympy.Integer(0)
        if base.kind == EnsembleKind.ATOMIC_COMPLEX:
            pairs = [
                (re, im, p_re * p_im)
                for (re, p_re), (im, p_im) in product(base.atoms, base.im_atoms)
                if _to_float(re) ** 2 + _to_float(im) ** 2 <= bound**2
            ]
            mass = sympy.Add(*[p for _, _, p in pairs])
            return sympy.Add(*[p * re**m * im**l for re, im, p in pairs]) / mass
        if base.kind == EnsembleKind.GAUSSIAN_REAL:
            if l or m % 2:
                return sympy.Integer(0)
            return sympy.Float(sp_stats.truncnorm.moment(m, -bound, bound), 17)
        if base.kind == EnsembleKind.GAUSSIAN_COMPLEX:
            return _truncated_complex_gaussian_moment(m, l, bound)
        # No closed form for composite bases; the untruncated table stands in.
        return base.moment_table[(m, l)]


def _kept_atoms(atoms: Atoms, bound: float) -> Atoms:
    kept = [(v, p) for v, p in atoms if abs(_to_float(v)) <= bound]
    mass = sympy.Add(*[p for _, p in kept])
    return tuple((v, p / mass) for v, p in kept)


def _truncated_complex_gaussian_moment(m: int, l: int, bound: float) -> sympy.Expr:
    # |zeta|^2 is Exp(1) and the phase is uniform and independent of it.
    if m % 2 or l % 2:
        return sympy.Integer(0)
    k = (m + l) // 2
    radial = math.factorial(k) * gammainc(k + 1, bound**2) / gammainc(1, bound**2)
    angular = sympy.factorial2(m - 1) * sympy.factorial2(l - 1) / sympy.factorial2(m + l) if m + l else 1
    return sympy.Float(radial, 17) * angular


# ============================================================================
# Moments
# ============================================================================

def _check_order(m: int, l: int) -> None:
    if m < 0 or l < 0:
        raise InvalidInputError("Moment orders must be nonnegative", details={"m": m, "l": l})
    if m + l > MAX_MOMENT_ORDER:
        raise UnsupportedOrderError(details={"m": m, "l": l})


def exact_moment(spec: DistributionSpec, m: int, l: int) -> sympy.Expr:
    """Exact E[Re(zeta)^m Im(zeta)^l] as a sympy expression."""
    _check_order(m, l)
    return spec.moment_table[(m, l)]


def moments(spec: DistributionSpec, m: int, l: int) -> float:
    """E[Re(zeta)^m Im(zeta)^l] for m + l <= 4."""
    _check_order(m, l)
    return spec.moment(m, l)


# ============================================================================
# Constructors
# ============================================================================

def _atoms_from(pairs: Iterable[tuple[Any, Any]]) -> Atoms:
    return tuple((exact_number(v), exact_number(p)) for v, p in pairs)


def gaussian_real() -> DistributionSpec:
    return DistributionSpec(EnsembleKind.GAUSSIAN_REAL, Normalization.R_NORMALIZED, name="gaussian_real")


def gaussian_complex() -> DistributionSpec:
    return DistributionSpec(EnsembleKind.GAUSSIAN_COMPLEX, Normalization.C_NORMALIZED, name="gaussian_complex")


def rademacher() -> DistributionSpec:
    return DistributionSpec(
        EnsembleKind.RADEMACHER,
        Normalization.R_NORMALIZED,
        atoms=_atoms_from([(-1, _HALF), (1, _HALF)]),
        name="rademacher",
    )


def atomic_real(pairs: Iterable[tuple[Any, Any]], name: str = "") -> DistributionSpec:
    """Real law on finitely many atoms given as (value, probability) pairs."""
    return DistributionSpec(EnsembleKind.ATOMIC_REAL, Normalization.R_NORMALIZED, atoms=_atoms_from(pairs), name=name)


def atomic_complex(
    re: Iterable[tuple[Any, Any]],
    im: Iterable[tuple[Any, Any]],
    name: str = "",
) -> DistributionSpec:
    """Product law Re x Im; each part must have mean 0 and variance 1/2."""
    return DistributionSpec(
        EnsembleKind.ATOMIC_COMPLEX,
        Normalization.C_NORMALIZED,
        atoms=_atoms_from(re),
        im_atoms=_atoms_from(im),
        name=name,
    )


def rademacher_complex() -> DistributionSpec:
    half_root = sympy.sqrt(_HALF)
    pairs = [(-half_root, _HALF), (half_root, _HALF)]
    return atomic_complex(pairs, pairs, name="rademacher_complex")


def match_third_order(m3: Any) -> DistributionSpec:
    """
    Two-atom real law with mean 0, variance 1 and third moment m3.

    Atoms a < 0 < b are the roots of x^2 - m3 x - 1, weighted so the mean
    vanishes; the support radius is at most |m3| + 1.
    """
    third = exact_number(m3)
    root = sympy.sqrt(third**2 + 4)
    a = (third - root) / 2
    b = (third + root) / 2
    return DistributionSpec(
        EnsembleKind.ATOMIC_REAL,
        Normalization.R_NORMALIZED,
        atoms=((a, b / root), (b, -a / root)),
        name=f"match3:m3={third}",
    )


def match_fourth_order_gaussian() -> DistributionSpec:
    """Three-atom law matching the real Gaussian through the fourth moment."""
    root3 = sympy.sqrt(3)
    sixth = sympy.Rational(1, 6)
    return DistributionSpec(
        EnsembleKind.ATOMIC_REAL,
        Normalization.R_NORMALIZED,
        atoms=((-root3, sixth), (sympy.Integer(0), sympy.Rational(2, 3)), (root3, sixth)),
        name="gauss4",
    )


def gaussian_divisible(t: Any, base: DistributionSpec) -> DistributionSpec:
    """(1-t)^(1/2) zeta' + t^(1/2) zeta'' with zeta'' Gaussian of the base's symmetry class."""
    exact_t = exact_number(t)
    if not base.standardized:
        raise DomainError("Base law must have mean 0 and variance 1", details={"base": base.name})
    return DistributionSpec(
        EnsembleKind.GAUSSIAN_DIVISIBLE,
        base.normalization,
        t=exact_t,
        base=base,
        name=f"gauss-div:t={exact_t}:base={base.name}",
    )


def truncation_bound(C0: float, n: int) -> float:
    """K = n^(10 / C0)."""
    if not C0 > 0:
        raise DomainError("C0 must be positive", details={"C0": C0})
    if n < 1:
        raise DomainError("n must be at least 1", details={"n": n})
    return float(n) ** (TRUNCATION_EXPONENT / C0)


def truncated(base: DistributionSpec, bound: float, name: str = "") -> DistributionSpec:
    """Condition `base` on |zeta| <= bound; nested truncations collapse to the tighter bound."""
    if base.kind == EnsembleKind.TRUNCATED:
        return truncated(base.base, min(bound, base.bound), name=name)
    if base.kind in _ATOMIC_KINDS and _outside_mass(base, bound) >= 1.0:
        raise DomainError("No atom lies inside the truncation bound", details={"bound": bound})
    spec = DistributionSpec(
        EnsembleKind.TRUNCATED,
        base.normalization,
        base=base,
        bound=float(bound),
        name=name or f"trunc:K={float(bound)!r}:base={base.name}",
    )
    if not spec.approximate and not spec.standardized:
        logger.warning(
            "Truncation changed the first two moments",
            extra_fields={"ensemble": spec.name, "variance": spec.variance},
        )
    return spec


def truncate(spec: DistributionSpec, C0: float, n: int) -> DistributionSpec:
    """Truncate at K = n^(10/C0); sampling rejects draws with |zeta| > K."""
    return truncated(spec, truncation_bound(C0, n))


def _outside_mass(spec: DistributionSpec, bound: float) -> float:
    if spec.kind == EnsembleKind.ATOMIC_COMPLEX:
        return sum(
            _to_float(p_re * p_im)
            for (re, p_re), (im, p_im) in product(spec.atoms, spec.im_atoms)
            if _to_float(re) ** 2 + _to_float(im) ** 2 > bound**2
        )
    return sum(_to_float(p) for v, p in spec.atoms if abs(_to_float(v)) > bound)


def rejection_probability(spec: DistributionSpec) -> float:
    """Probability that a single base draw is rejected by truncation."""
    if spec.kind != EnsembleKind.TRUNCATED:
        return 0.0
    base, bound = spec.base, spec.bound
    if base.kind == EnsembleKind.GAUSSIAN_REAL:
        return float(2.0 * sp_stats.norm.sf(bound))
    if base.kind == EnsembleKind.GAUSSIAN_COMPLEX:
        return math.exp(-(bound**2))
    if base.kind in _ATOMIC_KINDS:
        return _outside_mass(base, bound)
    raise DomainError("Rejection probability has no closed form for this base", details={"base": base.name})


# ============================================================================
# Registry and serialization
# ============================================================================

_BUILTINS = {
    "gaussian_real": gaussian_real,
    "gaussian": gaussian_real,
    "normal": gaussian_real,
    "gaussian_complex": gaussian_complex,
    "complex_gaussian": gaussian_complex,
    "rademacher": rademacher,
    "bernoulli": rademacher,
    "rademacher_complex": rademacher_complex,
    "gauss4": match_fourth_order_gaussian,
}


def builtin_names() -> list[str]:
    return sorted(_BUILTINS)


_PARAM_KEYS = {
    "match3": ({"m3"},),
    "gauss-div": ({"t"},),
    "trunc": ({"K"}, {"C0", "n"}),
}


def _closing_bracket(text: str, start: int, name: str) -> int:
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "(":
            depth += 1
        elif text[i] == ")":
            depth -= 1
            if depth == 0:
                return i
    raise UnknownEnsembleError(name, details={"reason": "unbalanced brackets"})


def _split_params(text: str, name: str) -> tuple[dict[str, str], str | None]:
    """
    Split `k=v:k=v:base=<name>` into parameters and the base name.

    The base either comes last and runs to the end of the name, or is
    bracketed as `base=(<name>)`, which may sit anywhere and nest.
    """
    params: dict[str, str] = {}
    base = None
    i = 0
    while i < len(text):
        if text.startswith("base=", i):
            if base is not None:
                raise UnknownEnsembleError(name, details={"reason": "base given twice"})
            i += len("base=")
            if not text.startswith("(", i):
                base = text[i:]
                break
            end = _closing_bracket(text, i, name)
            base = text[i + 1 : end]
            i = end + 1
            if i < len(text) and text[i] != ":":
                raise UnknownEnsembleError(name, details={"reason": "text after bracketed base"})
            i += 1
            continue
        end = text.find(":", i)
        end = len(text) if end < 0 else end
        key, sep, value = text[i:end].partition("=")
        if not sep or not key or not value or key in params:
            raise UnknownEnsembleError(name, details={"parameter": text[i:end]})
        params[key] = value
        i = end + 1
    return params, base


def _check_params(head: str, params: dict[str, str], base: str | None, name: str) -> None:
    needs_base = head != "match3"
    if set(params) not in _PARAM_KEYS[head] or (base is not None) != needs_base or base == "":
        expected = " or ".join(":".join(sorted(keys)) for keys in _PARAM_KEYS[head])
        hint = f"{expected}:base=<name>" if needs_base else expected
        raise UnknownEnsembleError(
            name,
            details={"expected": hint, "note": "an unbracketed base must be last; use base=(<name>) otherwise"},
        )


def resolve_spec(name: str) -> DistributionSpec:
    """
    Resolve a built-in or parameterized ensemble name to its spec.

    Raises:
        UnknownEnsembleError: unknown head, missing or unexpected parameters,
            or a base that does not resolve
    """
    if not isinstance(name, str) or not name.strip():
        raise UnknownEnsembleError(str(name))
    key = name.strip()
    if key in _BUILTINS:
        return replace(_BUILTINS[key](), name=key)

    head, _, rest = key.partition(":")
    try:
        if head == "atomic":
            pairs = [tuple(item.split("@")) for item in rest.split(",")]
            if not pairs or any(len(pair) != 2 for pair in pairs):
                raise UnknownEnsembleError(key)
            spec = atomic_real(pairs)
        elif head in _PARAM_KEYS:
            params, base_name = _split_params(rest, key)
            _check_params(head, params, base_name, key)
            if head == "match3":
                spec = match_third_order(params["m3"])
            else:
                base = resolve_spec(base_name)
                if head == "gauss-div":
                    spec = gaussian_divisible(params["t"], base)
                elif "K" in params:
                    spec = truncated(base, float(params["K"]))
                else:
                    spec = truncate(base, float(params["C0"]), int(params["n"]))
        else:
            raise UnknownEnsembleError(key)
    except (KeyError, ValueError) as e:
        raise UnknownEnsembleError(key) from e
    return replace(spec, name=key)


def spec_to_dict(spec: DistributionSpec) -> dict[str, Any]:
    """JSON-ready description: {kind, normalization, params...}; numbers as exact strings."""
    data: dict[str, Any] = {"kind": spec.kind.value, "normalization": spec.normalization.value}
    if spec.kind in _ATOMIC_KINDS:
        key = "re" if spec.kind == EnsembleKind.ATOMIC_COMPLEX else "atoms"
        data[key] = [[str(v), str(p)] for v, p in spec.atoms]
        if spec.kind == EnsembleKind.ATOMIC_COMPLEX:
            data["im"] = [[str(v), str(p)] for v, p in spec.im_atoms]
    elif spec.kind == EnsembleKind.GAUSSIAN_DIVISIBLE:
        data["t"] = str(spec.t)
        data["base"] = spec_to_dict(spec.base)
    elif spec.kind == EnsembleKind.TRUNCATED:
        data["bound"] = repr(spec.bound)
        data["base"] = spec_to_dict(spec.base)
    return data


def spec_from_dict(data: Mapping[str, Any], name: str = "") -> DistributionSpec:
    """Inverse of `spec_to_dict`."""
    try:
        kind = EnsembleKind(data["kind"])
        if kind == EnsembleKind.GAUSSIAN_REAL:
            return replace_name(gaussian_real(), name)
        if kind == EnsembleKind.GAUSSIAN_COMPLEX:
            return replace_name(gaussian_complex(), name)
        if kind == EnsembleKind.RADEMACHER:
            return replace_name(rademacher(), name)
        if kind == EnsembleKind.ATOMIC_REAL:
            return atomic_real(data["atoms"], name=name)
        if kind == EnsembleKind.ATOMIC_COMPLEX:
            return atomic_complex(data["re"], data["im"], name=name)
        if kind == EnsembleKind.GAUSSIAN_DIVISIBLE:
            return replace_name(gaussian_divisible(data["t"], spec_from_dict(data["base"])), name)
        return truncated(spec_from_dict(data["base"]), float(data["bound"]), name=name)
    except (KeyError, ValueError, TypeError) as e:
        raise InvalidInputError("Malformed distribution spec", details={"spec": dict(data)}) from e


def replace_name(spec: DistributionSpec, name: str) -> DistributionSpec:
    return replace(spec, name=name) if name else spec


def spec_id(spec: DistributionSpec) -> str:
    """Stable content hash of a spec."""
    payload = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


# ============================================================================
# Sampling
# ============================================================================

def _pick(table: tuple[np.ndarray, np.ndarray], words: np.ndarray) -> np.ndarray:
    values, cumulative = table
    index = np.searchsorted(cumulative, words_to_uniform(words), side="right")
    return values[np.minimum(index, values.size - 1)]


def _values(spec: DistributionSpec, words: np.ndarray) -> np.ndarray:
    kind = spec.kind
    if kind == EnsembleKind.GAUSSIAN_REAL:
        return words_to_normal(words[:, 0])
    if kind == EnsembleKind.GAUSSIAN_COMPLEX:
        return (words_to_normal(words[:, 0]) + 1j * words_to_normal(words[:, 1])) * _SQRT_HALF
    if kind in (EnsembleKind.RADEMACHER, EnsembleKind.ATOMIC_REAL):
        return _pick(spec._sampling_tables[0], words[:, 0])
    if kind == EnsembleKind.ATOMIC_COMPLEX:
        re_table, im_table = spec._sampling_tables
        return _pick(re_table, words[:, 0]) + 1j * _pick(im_table, words[:, 1])
    if kind == EnsembleKind.GAUSSIAN_DIVISIBLE:
        width = spec.base.word_width
        t = _to_float(spec.t)
        gaussian = gaussian_complex() if spec.is_complex else gaussian_real()
        return math.sqrt(1.0 - t) * _values(spec.base, words[:, :width]) + math.sqrt(t) * _values(
            gaussian, words[:, width:]
        )
    return _values(spec.base, words)


def _draw(spec: DistributionSpec, stream: CounterStream, count: int) -> np.ndarray:
    width = spec.word_width
    values = _values(spec, stream.entry_words(0, count, width))
    if spec.kind != EnsembleKind.TRUNCATED:
        return values

    bound = spec.bound
    rejected = np.flatnonzero(np.abs(values) > bound)
    round_ = 1
    while rejected.size:
        if round_ > REJECTION_MAX_ROUNDS:
            raise RejectionLimitError(details={"ensemble": spec.name, "remaining": int(rejected.size)})
        lo, hi = int(rejected[0]), int(rejected[-1]) + 1
        fresh = _values(spec.base, stream.entry_words(lo, hi, width, round_))[rejected - lo]
        values[rejected] = fresh
        rejected = rejected[np.abs(fresh) > bound]
        round_ += 1
    if round_ > 1:
        logger.debug("Rejection sampling finished", extra_fields={"rounds": round_ - 1})
    return values


def sample_array(spec: DistributionSpec, count: int, seed: int, trial: int, stream: int = 0) -> np.ndarray:
    """`count` iid entries; entry e is a function of (seed, trial, stream, e) only."""
    if count < 0:
        raise ShapeError("count must be nonnegative", details={"count": count})
    values = _draw(spec, CounterStream(seed, trial, stream), count)
    return values.astype(np.complex128 if spec.is_complex else np.float64, copy=False)


@dataclass(frozen=True, eq=False)
class MatrixSample:
    """A realized p x n matrix with its provenance."""

    entries: np.ndarray
    seed: int
    trial_index: int
    spec_id: str
    ensemble: str = ""
    stream: int = 0

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def sample_matrix(
    spec: DistributionSpec, p: int, n: int, seed: int, trial: int, *, stream: int = 0
) -> MatrixSample:
    """
    Draw a p x n matrix of iid entries.

    Entry (i, j) of trial k depends only on (seed, k, i, j) through the
    counter-based stream, so regeneration is bit-identical in any order.
    Matrices with the same seed and trial share entries across ensembles
    (the coupling four-moment comparisons rely on) unless `stream` differs.
    """
    if p < 1 or n < 1:
        raise ShapeError("Dimensions must be positive", details={"p": p, "n": n})
    if p > n:
        raise ShapeError("Requires p <= n", details={"p": p, "n": n})
    seed = check_u64(seed, "seed")
    trial = check_u64(trial, "trial")
    stream = check_u64(stream, "stream")
    entries = sample_array(spec, p * n, seed, trial, stream).reshape(p, n)
    entries.flags.writeable = False
    return MatrixSample(
        entries=entries, seed=seed, trial_index=trial, spec_id=spec_id(spec), ensemble=spec.name, stream=stream
    )
