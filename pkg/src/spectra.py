"""
Spectral Decompositions and Exact Identities

Singular value decompositions of p x n samples, the covariance spectrum of
W = M*M / n, the Hermitian augmentation [[0, M*], [M, 0]], and numerical
verifiers for the interlacing law, Weyl's inequality, the coordinate formula
for singular vectors, the interlacing identities and the Schur-complement
form of the Stieltjes transform.

Verifiers report residuals instead of returning booleans so callers can
track the distribution of numerical error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import scipy.linalg

from src.constants import (
    IDENTITY_TOL,
    INTERLACING_TOL,
    JACOBI_SWEEPS_PER_ROW,
    JACOBI_TOL,
    RESOLVENT_DISTANCE_TOL,
    SEPARATION_TOL,
    WEYL_TOL,
)
from src.ensembles import MatrixSample
from src.exceptions import (
    DegenerateSpectrumError,
    InvalidInputError,
    NonConvergenceError,
    PreconditionError,
    ShapeError,
)
from src.logging_config import get_logger

logger = get_logger(__name__)

DecompositionMethod = Literal["lapack", "jacobi"]


def as_array(M: MatrixSample | np.ndarray) -> np.ndarray:
    """Entries of a sample (or a plain array) as a finite 2-D array."""
    entries = M.entries if isinstance(M, MatrixSample) else np.asarray(M)
    if entries.ndim != 2:
        raise ShapeError("Expected a 2-D matrix", details={"ndim": entries.ndim})
    if not np.all(np.isfinite(entries)):
        raise InvalidInputError("Matrix has non-finite entries")
    if not np.iscomplexobj(entries):
        entries = entries.astype(np.float64, copy=False)
    return entries


def _thin_svd(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ascending singular values with left (rows x k) and right (cols x k) vectors."""
    rows, cols = A.shape
    k = min(rows, cols)
    if k == 0:
        return np.zeros(0), np.zeros((rows, 0), dtype=A.dtype), np.zeros((cols, 0), dtype=A.dtype)
    try:
        left, sigma, right_h = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
    except np.linalg.LinAlgError as e:
        raise NonConvergenceError("LAPACK SVD did not converge", details={"shape": A.shape}) from e
    order = np.argsort(sigma[::-1], kind="stable")
    sigma = sigma[::-1][order]
    left = left[:, ::-1][:, order]
    right = right_h.conj().T[:, ::-1][:, order]
    return sigma, left, right


def _svdvals(A: np.ndarray) -> np.ndarray:
    if min(A.shape) == 0:
        return np.zeros(0)
    return np.sort(scipy.linalg.svdvals(A))


# ============================================================================
# Decomposition
# ============================================================================

@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """
    Thin SVD of a p x n matrix with ascending singular values.

    Column i of `right_vectors` is u_i in C^n and column i of `left_vectors`
    is v_i in C^p, with M u_i = sigma_i v_i.
    """

    p: int
    n: int
    sigma: np.ndarray
    lambdas: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    residual_norm: float
    method: str = "lapack"

    @property
    def op_norm(self) -> float:
        return float(self.sigma[-1]) if self.sigma.size else 0.0

    def reconstruct(self) -> np.ndarray:
        """Sum of sigma_i v_i u_i*."""
        return (self.left_vectors * self.sigma) @ self.right_vectors.conj().T

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": self.p,
            "n": self.n,
            "sigma": self.sigma.tolist(),
            "lambda": self.lambdas.tolist(),
            "residual_norm": self.residual_norm,
            "method": self.method,
        }


def _jacobi_svd(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    One-sided Jacobi on the columns of M* (n x p).

    Rotations are applied until every column pair is orthogonal to
    JACOBI_TOL relative to the column norms.
    """
    p, n = M.shape
    A = M.conj().T.astype(np.complex128)
    V = np.eye(p, dtype=np.complex128)
    max_sweeps = JACOBI_SWEEPS_PER_ROW * p

    for sweep in range(max_sweeps):
        rotated = False
        for j in range(p - 1):
            for k in range(j + 1, p):
                aj, ak = A[:, j], A[:, k]
                alpha = float(np.vdot(aj, aj).real)
                beta = float(np.vdot(ak, ak).real)
                gamma = np.vdot(aj, ak)
                mag = abs(gamma)
                if mag <= JACOBI_TOL * np.sqrt(alpha * beta) or mag == 0.0:
                    continue
                rotated = True
                phase = gamma / mag
                zeta = (beta - alpha) / (2.0 * mag)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                A[:, j], A[:, k] = c * aj - s * np.conj(phase) * ak, s * phase * aj + c * ak
                vj, vk = V[:, j].copy(), V[:, k].copy()
                V[:, j], V[:, k] = c * vj - s * np.conj(phase) * vk, s * phase * vj + c * vk
        if not rotated:
            logger.debug("Jacobi converged", extra_fields={"sweeps": sweep + 1, "p": p, "n": n})
            break
    else:
        raise NonConvergenceError(
            "Jacobi SVD exceeded its sweep cap",
            details={"sweeps": max_sweeps, "p": p, "n": n},
        )

    sigma = np.linalg.norm(A, axis=0)
    order = np.argsort(sigma, kind="stable")
    sigma, A, V = sigma[order], A[:, order], V[:, order]

    U = np.zeros((n, p), dtype=np.complex128)
    floor = max(p, n) * np.finfo(np.float64).eps * (sigma[-1] if sigma.size else 0.0)
    kept = sigma > floor
    U[:, kept] = A[:, kept] / sigma[kept]
    missing = int(np.count_nonzero(~kept))
    if missing:
        # Zero singular values: complete with directions orthogonal to the kept ones.
        basis = scipy.linalg.null_space(U[:, kept].conj().T) if kept.any() else np.eye(n)
        U[:, ~kept] = basis[:, :missing]

    if not np.iscomplexobj(M):
        if np.allclose(U.imag, 0.0) and np.allclose(V.imag, 0.0):
            U, V = U.real.copy(), V.real.copy()
    return sigma, V, U


def decompose(M: MatrixSample | np.ndarray, method: DecompositionMethod = "lapack") -> SpectralDecomposition:
    """
    Full thin SVD with ascending singular values and lambda_i = sigma_i^2 / n.

    Args:
        M: p x n sample with p <= n
        method: "lapack" (Householder bidiagonalization + QR) or "jacobi"

    Raises:
        InvalidInputError: non-finite entries
        ShapeError: p > n
        NonConvergenceError: the solver hit its iteration cap
    """
    A = as_array(M)
    p, n = A.shape
    if p < 1 or p > n:
        raise ShapeError("decompose requires 1 <= p <= n", details={"p": p, "n": n})

    if method == "lapack":
        sigma, left, right = _thin_svd(A)
    elif method == "jacobi":
        sigma, left, right = _jacobi_svd(A)
    else:
        raise InvalidInputError(f"Unknown decomposition method {method!r}")

    residual = float(np.max(np.linalg.norm(A @ right - left * sigma, axis=0)))
    return SpectralDecomposition(
        p=p,
        n=n,
        sigma=sigma,
        lambdas=sigma**2 / n,
        right_vectors=right,
        left_vectors=left,
        residual_norm=residual,
        method=method,
    )


def covariance_spectrum(M: MatrixSample | np.ndarray, include_zeros: bool = False) -> np.ndarray:
    """
    Ascending eigenvalues of W = M*M / n via the p x p Gram matrix M M* / n.

    With `include_zeros` the n - p trivial eigenvalues of the n x n W are
    prepended; by default only the p nontrivial ones are returned.
    """
    A = as_array(M)
    p, n = A.shape
    if p < 1 or p > n:
        raise ShapeError("covariance_spectrum requires 1 <= p <= n", details={"p": p, "n": n})
    gram = (A @ A.conj().T) / n
    try:
        lambdas = scipy.linalg.eigvalsh(gram)
    except np.linalg.LinAlgError as e:
        raise NonConvergenceError("Hermitian eigensolver did not converge", details={"p": p}) from e
    lambdas = np.clip(lambdas, 0.0, None)
    if include_zeros:
        lambdas = np.concatenate([np.zeros(n - p), lambdas])
    return lambdas


# ============================================================================
# Augmented matrix
# ============================================================================

@dataclass(frozen=True, eq=False)
class AugmentedMatrix:
    """The (p+n) x (p+n) Hermitian matrix [[0, M*], [M, 0]]."""

    matrix: np.ndarray
    p: int
    n: int

    @property
    def dimension(self) -> int:
        return self.p + self.n

    def eigenvalues(self) -> np.ndarray:
        return scipy.linalg.eigvalsh(self.matrix)

    @staticmethod
    def expected_spectrum(sigma: np.ndarray, n: int) -> np.ndarray:
        """{+-sigma_i} together with n - p zeros, ascending."""
        sigma = np.asarray(sigma, dtype=np.float64)
        return np.sort(np.concatenate([-sigma, np.zeros(n - sigma.size), sigma]))


def augmented(M: MatrixSample | np.ndarray) -> AugmentedMatrix:
    A = as_array(M)
    p, n = A.shape
    block = np.zeros((n + p, n + p), dtype=A.dtype)
    block[:n, n:] = A.conj().T
    block[n:, :n] = A
    return AugmentedMatrix(matrix=block, p=p, n=n)


# ============================================================================
# Verifiers
# ============================================================================

@dataclass
class Report:
    """Outcome of a numerical identity or inequality check."""

    check: str
    residual: float
    tolerance: float
    checks: int
    margin: float | None = None
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance

    def to_dict(self) -> dict[str, Any]:
        return {
            "check": self.check,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "checks": self.checks,
            "margin": self.margin,
            "passed": self.passed,
            "details": self.details,
        }


def _interlace_slack(lower: np.ndarray, middle: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.concatenate([middle - lower, upper - middle])


def verify_interlacing_law(M: MatrixSample | np.ndarray) -> Report:
    """
    Check singular value interlacing for every row minor and column minor.

    Row minors satisfy sigma_i(M) <= sigma_i(minor) <= sigma_{i+1}(M). Column
    minors satisfy sigma_{i-1}(M) <= sigma_i(minor) <= sigma_i(M) with
    sigma_0 = 0; square matrices take column minors through the transpose.
    """
    A = as_array(M)
    p, n = A.shape
    if p < 2:
        raise ShapeError("Interlacing needs p >= 2", details={"p": p})
    if p > n:
        raise ShapeError("Requires p <= n", details={"p": p, "n": n})
    sigma = _svdvals(A)
    slacks = []

    for row in range(p):
        minor = _svdvals(np.delete(A, row, axis=0))
        slacks.append(_interlace_slack(sigma[:-1], minor, sigma[1:]))

    for col in range(n):
        minor = _svdvals(np.delete(A, col, axis=1))
        if p < n:
            lower = np.concatenate([[0.0], sigma[:-1]])
            slacks.append(_interlace_slack(lower, minor, sigma))
        else:
            slacks.append(_interlace_slack(sigma[:-1], minor, sigma[1:]))

    slack = np.concatenate(slacks)
    margin = float(slack.min())
    return Report(
        check="interlacing_law",
        residual=max(0.0, -margin),
        tolerance=INTERLACING_TOL,
        checks=int(slack.size),
        margin=margin,
        details={"row_minors": p, "column_minors": n, "column_case": "direct" if p < n else "transpose"},
    )


def verify_weyl(M: MatrixSample | np.ndarray, N: MatrixSample | np.ndarray) -> Report:
    """Check |sigma_i(M) - sigma_i(N)| <= ||M - N||_op for every i."""
    A, B = as_array(M), as_array(N)
    if A.shape != B.shape:
        raise ShapeError("Weyl check needs equal shapes", details={"M": A.shape, "N": B.shape})
    op_norm = float(_svdvals(A - B)[-1]) if min(A.shape) else 0.0
    shifts = np.abs(_svdvals(A) - _svdvals(B))
    max_shift = float(shifts.max()) if shifts.size else 0.0
    slack = op_norm - shifts
    return Report(
        check="weyl",
        residual=max(0.0, -float(slack.min())) if slack.size else 0.0,
        tolerance=WEYL_TOL,
        checks=int(shifts.size),
        margin=float(slack.min()) if slack.size else None,
        details={
            "op_norm": op_norm,
            "max_shift": max_shift,
            "tightness": max_shift / op_norm if op_norm > 0 else None,
        },
    )


def _check_index(i: int, p: int) -> None:
    if not 1 <= i <= p:
        raise InvalidInputError("Index must satisfy 1 <= i <= p", details={"i": i, "p": p})


def _check_separation(minor_sigma: np.ndarray, target: float, i: int) -> None:
    if minor_sigma.size == 0:
        return
    gaps = np.abs(minor_sigma - target)
    j = int(np.argmin(gaps))
    if gaps[j] < SEPARATION_TOL:
        raise DegenerateSpectrumError(
            f"sigma_{i}(M) coincides with a minor singular value",
            index=j + 1,
            details={"i": i, "gap": float(gaps[j])},
        )


def _weighted_sum(minor_sigma, projections, target_sq, power):
    sq = minor_sigma**2
    return np.sum(sq * np.abs(projections) ** 2 / (sq - target_sq) ** power)


def coordinate_formula(M: MatrixSample | np.ndarray, i: int, side: Literal["right", "left"] = "right") -> float:
    """
    |x|^2 for the last coordinate of the i-th singular vector, from the minor.

    side="right" drops the last column X and uses the minor's left vectors;
    side="left" drops the last row Y* and uses the minor's right vectors.
    """
    A = as_array(M)
    p, _ = A.shape
    _check_index(i, p)
    sigma_i = _svdvals(A)[i - 1]
    if side == "right":
        minor_sigma, minor_left, _ = _thin_svd(A[:, :-1])
        projections = minor_left.conj().T @ A[:, -1]
    else:
        minor_sigma, _, minor_right = _thin_svd(A[:-1, :])
        projections = minor_right.conj().T @ A[-1, :].conj()
    _check_separation(minor_sigma, sigma_i, i)
    return float(1.0 / (1.0 + _weighted_sum(minor_sigma, projections, sigma_i**2, 2)))


def verify_coordinate_formula(M: MatrixSample | np.ndarray, i: int) -> float:
    """
    Largest |formula - direct| over the right-vector and left-vector variants.

    Raises:
        DegenerateSpectrumError: a minor singular value lies within 1e-8 of sigma_i
    """
    A = as_array(M)
    p, n = A.shape
    if p > n:
        raise ShapeError("Requires p <= n", details={"p": p, "n": n})
    _check_index(i, p)
    decomp = decompose(A)
    direct_right = abs(decomp.right_vectors[-1, i - 1]) ** 2
    direct_left = abs(decomp.left_vectors[-1, i - 1]) ** 2
    return max(
        abs(coordinate_formula(A, i, "right") - direct_right),
        abs(coordinate_formula(A, i, "left") - direct_left),
    )


def _relative(lhs: float, rhs: float, scale: float) -> float:
    return abs(lhs - rhs) / scale if scale > 0 else abs(lhs - rhs)


def verify_interlacing_identity(M: MatrixSample | np.ndarray) -> Report:
    """
    Check the column-split and row-split interlacing identities for every i,
    plus the Hermitian eigenvalue identity on the p x p matrix M M* / n.
    """
    A = as_array(M)
    p, n = A.shape
    if p > n:
        raise ShapeError("Requires p <= n", details={"p": p, "n": n})
    sigma = _svdvals(A)

    col_sigma, col_left, _ = _thin_svd(A[:, :-1])
    X = A[:, -1]
    col_proj = col_left.conj().T @ X
    x_norm_sq = float(np.vdot(X, X).real)

    row_sigma, _, row_right = _thin_svd(A[:-1, :])
    Y = A[-1, :].conj()
    row_proj = row_right.conj().T @ Y
    y_norm_sq = float(np.vdot(Y, Y).real)

    W = (A @ A.conj().T) / n
    lam, _ = np.linalg.eigh(W)
    sub_lam, sub_vec = np.linalg.eigh(W[:-1, :-1]) if p > 1 else (np.zeros(0), np.zeros((0, 0)))
    a = W[:-1, -1]
    sub_proj = sub_vec.conj().T @ a if p > 1 else np.zeros(0)
    a_nn = float(W[-1, -1].real)

    column_res, row_res, herm_res = [], [], []
    for idx in range(p):
        target = sigma[idx]
        _check_separation(col_sigma, target, idx + 1)
        _check_separation(row_sigma, target, idx + 1)
        sq = target**2

        terms = col_sigma**2 * np.abs(col_proj) ** 2 / (col_sigma**2 - sq)
        column_res.append(_relative(terms.sum(), x_norm_sq - sq, np.abs(terms).sum() + x_norm_sq + sq))

        terms = row_sigma**2 * np.abs(row_proj) ** 2 / (row_sigma**2 - sq)
        row_res.append(_relative(terms.sum(), y_norm_sq - sq, np.abs(terms).sum() + y_norm_sq + sq))

        terms = np.abs(sub_proj) ** 2 / (sub_lam - lam[idx])
        herm_res.append(_relative(terms.sum(), a_nn - lam[idx], np.abs(terms).sum() + abs(a_nn) + abs(lam[idx])))

    worst = {
        "column_split": float(max(column_res)),
        "row_split": float(max(row_res)),
        "hermitian": float(max(herm_res)),
    }
    return Report(
        check="interlacing_identity",
        residual=max(worst.values()),
        tolerance=IDENTITY_TOL,
        checks=3 * p,
        details=worst,
    )


def schur_stieltjes_sides(H: np.ndarray, z: complex) -> tuple[complex, complex]:
    """
    Both sides of the Schur-complement representation of s(z) for Hermitian H.

    Left: (1/p) sum 1/(lambda_i - z). Right: (1/p) sum over k of
    1/(h_kk - z - a_k* (H_k - z)^{-1} a_k) with direct linear solves.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ShapeError("Expected a square matrix", details={"shape": H.shape})
    if not np.all(np.isfinite(H)):
        raise InvalidInputError("Matrix has non-finite entries")
    if not np.allclose(H, H.conj().T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(H).max(initial=0.0)))):
        raise InvalidInputError("Matrix is not Hermitian")
    p = H.shape[0]
    z = complex(z)

    eig = scipy.linalg.eigvalsh(H)
    if np.min(np.abs(eig - z)) < RESOLVENT_DISTANCE_TOL:
        raise PreconditionError("z is too close to the spectrum", details={"z": str(z)})
    left = complex(np.mean(1.0 / (eig - z)))

    total = 0.0 + 0.0j
    for k in range(p):
        keep = np.delete(np.arange(p), k)
        H_k = H[np.ix_(keep, keep)]
        a_k = H[keep, k]
        if p > 1:
            if np.min(np.abs(scipy.linalg.eigvalsh(H_k) - z)) < RESOLVENT_DISTANCE_TOL:
                raise PreconditionError(
                    "z is too close to a principal minor's spectrum",
                    details={"z": str(z), "k": k + 1},
                )
            quad = np.vdot(a_k, scipy.linalg.solve(H_k - z * np.eye(p - 1), a_k))
        else:
            quad = 0.0
        total += 1.0 / (H[k, k] - z - quad)
    return left, complex(total / p)


def verify_schur_stieltjes(H: np.ndarray, z: complex) -> float:
    """|eigenvalue form - Schur-complement form| of the Stieltjes transform."""
    left, right = schur_stieltjes_sides(H, z)
    return abs(left - right)
