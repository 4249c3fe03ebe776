"""Pointwise linear algebra for degenerate quadratic forms.

A quadratic form is carried by a symmetric nonnegative-definite matrix field
x -> Q(x) that may be singular (the form can vanish on nonzero directions).
This module evaluates such forms, tests vectors for the subunit property
(v.xi)^2 <= xi'Q(x)xi, computes matrix square roots and comparability spectra
of one PSD field against another, and extracts the subunit row tuple of a
square-root field.  Everything here is a pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractViolationError, HypothesisViolationError, NotComparableError

# Relative slack for nonnegative-definiteness of matrix fields.
PSD_TOL = 1e-10
# Relative symmetry tolerance for matrix fields.
SYM_RTOL = 1e-12
# Default tolerance for subunit / comparability decisions.
SUBUNIT_TOL = 1e-8


def _as_batch(points, dim: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != dim:
        raise ContractViolationError(
            f"points have dimension {pts.shape[-1]}, field has dimension {dim}"
        )
    return pts


@dataclass(frozen=True)
class SymMatrixField:
    """Symmetric PSD matrix field with a declared uniform upper bound.

    ``eval`` maps a batch of points, shape (m, dim), to a stack of symmetric
    matrices, shape (m, dim, dim).  ``bound_C0`` is the declared constant with
    xi'Q(x)xi <= bound_C0*|xi|^2 on the domain of interest.
    """

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    bound_C0: float

    def at(self, x) -> np.ndarray:
        """Matrix at a single point."""
        return self.eval(_as_batch(x, self.dim))[0]

    def batch(self, points) -> np.ndarray:
        """Matrices at a batch of points, validated for shape and symmetry."""
        pts = _as_batch(points, self.dim)
        mats = np.asarray(self.eval(pts), dtype=float)
        if mats.shape != (len(pts), self.dim, self.dim):
            raise ContractViolationError(
                f"matrix field returned shape {mats.shape}, "
                f"expected {(len(pts), self.dim, self.dim)}"
            )
        scale = 1.0 + np.abs(mats).max(axis=(1, 2))
        asym = np.abs(mats - np.transpose(mats, (0, 2, 1))).max(axis=(1, 2))
        bad = asym > SYM_RTOL * scale
        if np.any(bad):
            i = int(np.argmax(bad))
            raise HypothesisViolationError(
                f"matrix field not symmetric at point {pts[i]} "
                f"(asymmetry {asym[i]:.3e})"
            )
        return 0.5 * (mats + np.transpose(mats, (0, 2, 1)))

    @staticmethod
    def constant(matrix, bound_C0: float | None = None) -> "SymMatrixField":
        mat = np.asarray(matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ContractViolationError("constant field needs a square matrix")
        if bound_C0 is None:
            bound_C0 = float(np.linalg.eigvalsh(mat).max())
        dim = mat.shape[0]
        return SymMatrixField(dim, lambda pts: np.broadcast_to(
            mat, (len(pts), dim, dim)).copy(), float(bound_C0))

    @staticmethod
    def identity(dim: int) -> "SymMatrixField":
        return SymMatrixField.constant(np.eye(dim), 1.0)

    @staticmethod
    def diagonal(dim: int, diag_fn: Callable[[np.ndarray], np.ndarray],
                 bound_C0: float) -> "SymMatrixField":
        """Field with diagonal matrices; ``diag_fn`` maps (m, dim) -> (m, dim)."""

        def ev(pts):
            d = np.asarray(diag_fn(pts), dtype=float)
            out = np.zeros((len(pts), dim, dim))
            idx = np.arange(dim)
            out[:, idx, idx] = d
            return out

        return SymMatrixField(dim, ev, float(bound_C0))


@dataclass(frozen=True)
class VectorFieldTuple:
    """Tuple of first-order vectorfields, stored as coefficient rows.

    ``eval`` maps a batch of points, shape (m, dim), to the stacked coefficient
    rows, shape (m, count, dim); row i at a point is the coefficient vector of
    the i-th field.
    """

    dim: int
    count: int
    eval: Callable[[np.ndarray], np.ndarray]

    def at(self, x) -> np.ndarray:
        return self.eval(_as_batch(x, self.dim))[0]

    def batch(self, points) -> np.ndarray:
        pts = _as_batch(points, self.dim)
        rows = np.asarray(self.eval(pts), dtype=float)
        if rows.shape != (len(pts), self.count, self.dim):
            raise ContractViolationError(
                f"tuple field returned shape {rows.shape}, "
                f"expected {(len(pts), self.count, self.dim)}"
            )
        if not np.all(np.isfinite(rows)):
            raise HypothesisViolationError("tuple field produced non-finite coefficients")
        return rows

    @staticmethod
    def zeros(dim: int, count: int) -> "VectorFieldTuple":
        return VectorFieldTuple(
            dim, count, lambda pts: np.zeros((len(pts), count, dim)))

    @staticmethod
    def constant(rows) -> "VectorFieldTuple":
        mat = np.atleast_2d(np.asarray(rows, dtype=float))
        count, dim = mat.shape
        return VectorFieldTuple(dim, count, lambda pts: np.broadcast_to(
            mat, (len(pts), count, dim)).copy())


@dataclass
class SubunitResult:
    """Outcome of a single subunit test."""

    is_subunit: bool
    worst_ratio: float
    tolerance: float


@dataclass
class SubunitCertificate:
    """Subunit test aggregated over the rows of a tuple and a point set."""

    is_subunit: np.ndarray      # bool per row, worst case over points
    worst_ratio: float          # max over rows and points
    tolerance: float
    worst_row: int
    worst_point: np.ndarray

    @property
    def all_subunit(self) -> bool:
        return bool(np.all(self.is_subunit))


def eval_quadratic_form(Qf: SymMatrixField, x, xi) -> float:
    """Value xi'Q(x)xi, clamped to zero inside the PSD tolerance band."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (Qf.dim,):
        raise ContractViolationError(
            f"direction has shape {xi.shape}, expected ({Qf.dim},)")
    if not np.all(np.isfinite(xi)):
        raise ContractViolationError("direction must be finite")
    Q = Qf.at(x)
    val = float(xi @ Q @ xi)
    floor = -PSD_TOL * (1.0 + np.linalg.norm(Q)) * float(xi @ xi)
    if val < floor:
        raise HypothesisViolationError(
            f"form is negative ({val:.3e}) at point {np.asarray(x)}")
    return max(val, 0.0)


def quadratic_form_batch(Qf: SymMatrixField, points, vecs) -> np.ndarray:
    """xi'Q(x)xi for paired batches of points (m, dim) and vectors (m, dim)."""
    Qs = Qf.batch(points)
    v = np.asarray(vecs, dtype=float)
    vals = np.einsum("md,mde,me->m", v, Qs, v)
    return np.maximum(vals, 0.0)


def _range_ratio(Q: np.ndarray, v: np.ndarray, tol: float) -> float:
    """max over directions of (v.xi)^2 / xi'Qxi restricted to range(Q).

    Computed as v'Q^+v with an eigenvalue cutoff of tol*lambda_max(Q); infinite
    when v has a component in the kernel of Q.
    """
    lam, U = np.linalg.eigh(Q)
    lmax = float(lam.max(initial=0.0))
    cutoff = tol * lmax
    vr = U.T @ v
    in_range = lam > cutoff
    kern_mass = float(np.sum(vr[~in_range] ** 2))
    if kern_mass > tol * (1.0 + float(v @ v)):
        return float("inf")
    if not np.any(in_range):
        return 0.0 if float(v @ v) <= tol else float("inf")
    return float(np.sum(vr[in_range] ** 2 / lam[in_range]))


def is_subunit(Qf: SymMatrixField, v, x, tol: float = SUBUNIT_TOL) -> SubunitResult:
    """Test (v.xi)^2 <= xi'Q(x)xi for all directions xi.

    The decision criterion is lambda_max(vv' - Q(x)) <= tol*(1 + ||Q(x)||);
    the reported worst_ratio is v'Q(x)^+v on the range of Q(x).
    """
    if tol <= 0:
        raise ContractViolationError("tolerance must be positive")
    v = np.asarray(v, dtype=float)
    if v.shape != (Qf.dim,):
        raise ContractViolationError(
            f"vector has shape {v.shape}, expected ({Qf.dim},)")
    Q = Qf.at(x)
    lam = np.linalg.eigvalsh(Q)
    qnorm = float(np.abs(lam).max(initial=0.0))
    if lam.min(initial=0.0) < -tol * (1.0 + qnorm):
        raise HypothesisViolationError(
            f"form matrix is not PSD at point {np.asarray(x)} "
            f"(min eigenvalue {lam.min():.3e})")
    crit = float(np.linalg.eigvalsh(np.outer(v, v) - Q).max())
    ok = crit <= tol * (1.0 + qnorm)
    ratio = _range_ratio(Q, v, tol)
    return SubunitResult(bool(ok), ratio, tol)


def certify_subunit_tuple(Qf: SymMatrixField, tuple_field: VectorFieldTuple,
                          points, tol: float = SUBUNIT_TOL) -> SubunitCertificate:
    """Subunit test for every row of a tuple at every point of a batch."""
    if tuple_field.dim != Qf.dim:
        raise ContractViolationError("tuple and form dimensions differ")
    pts = _as_batch(points, Qf.dim)
    if tuple_field.count == 0:
        return SubunitCertificate(np.ones(0, dtype=bool), 0.0, tol, -1,
                                  np.full(Qf.dim, np.nan))
    Qs = Qf.batch(pts)
    rows = tuple_field.batch(pts)
    m, count, n = rows.shape

    lam_q = np.linalg.eigvalsh(Qs)                      # (m, n)
    qnorm = np.abs(lam_q).max(axis=1)
    if np.any(lam_q[:, 0] < -tol * (1.0 + qnorm)):
        i = int(np.argmin(lam_q[:, 0] + tol * (1.0 + qnorm)))
        raise HypothesisViolationError(
            f"form matrix is not PSD at point {pts[i]} "
            f"(min eigenvalue {lam_q[i, 0]:.3e})")

    # lambda_max(vv' - Q) per (point, row)
    outer = np.einsum("mkd,mke->mkde", rows, rows)      # (m, count, n, n)
    diff = outer - Qs[:, None, :, :]
    crit = np.linalg.eigvalsh(diff.reshape(m * count, n, n))[:, -1]
    crit = crit.reshape(m, count)
    ok = crit <= (tol * (1.0 + qnorm))[:, None]

    # worst_ratio via the eigendecomposition pseudoinverse, vectorized
    lam, U = np.linalg.eigh(Qs)                         # (m, n), (m, n, n)
    vr = np.einsum("mdn,mkd->mkn", U, rows)             # components in eigenbasis
    in_range = lam[:, None, :] > (tol * lam[:, -1])[:, None, None]
    kern_mass = np.sum(np.where(in_range, 0.0, vr ** 2), axis=2)
    vnorm2 = np.einsum("mkd,mkd->mk", rows, rows)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.sum(np.where(in_range, vr ** 2 / lam[:, None, :], 0.0), axis=2)
    ratios = np.where(kern_mass > tol * (1.0 + vnorm2), np.inf, ratios)

    per_row_ok = ok.all(axis=0)
    flat = int(np.argmax(ratios))
    worst_point_idx, worst_row = divmod(flat, count)
    return SubunitCertificate(
        is_subunit=per_row_ok,
        worst_ratio=float(ratios.max()),
        tolerance=tol,
        worst_row=int(worst_row),
        worst_point=pts[worst_point_idx],
    )


def sqrt_psd(A, tol: float = 1e-12) -> np.ndarray:
    """Unique symmetric PSD square root of a symmetric PSD matrix.

    Eigenvalues in [-tol*||A||, 0) are truncated to zero; anything lower is a
    hypothesis violation.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractViolationError("square matrix required")
    scale = 1.0 + float(np.abs(A).max(initial=0.0))
    if float(np.abs(A - A.T).max(initial=0.0)) > tol * scale:
        raise HypothesisViolationError("matrix is not symmetric within tolerance")
    S = _sqrt_psd_batch(A[None], tol)[0]
    return S


def _sqrt_psd_batch(mats: np.ndarray, tol: float) -> np.ndarray:
    lam, U = np.linalg.eigh(0.5 * (mats + np.transpose(mats, (0, 2, 1))))
    norms = np.abs(lam).max(axis=1)
    if np.any(lam[:, 0] < -tol * norms - tol):
        i = int(np.argmin(lam[:, 0]))
        raise HypothesisViolationError(
            f"matrix {i} has eigenvalue {lam[i, 0]:.3e} below the PSD tolerance")
    root = np.sqrt(np.maximum(lam, 0.0))
    return np.einsum("mij,mj,mkj->mik", U, root, U)


def sqrt_field_batch(Pf: SymMatrixField, points, tol: float = 1e-12) -> np.ndarray:
    """Square roots of a matrix field at a batch of points, shape (m, n, n)."""
    return _sqrt_psd_batch(Pf.batch(points), tol)


def comparability_constants(Pf: SymMatrixField, Qf: SymMatrixField,
                            sample_points, tol: float = PSD_TOL) -> tuple[float, float]:
    """Two-sided comparability constants of P against Q over a point set.

    Returns (c1, C1) with c1*xi'Q(x)xi <= xi'P(x)xi <= C1*xi'Q(x)xi at every
    sampled point, computed from the generalized spectrum of P on range(Q).
    Raises NotComparableError when ker Q(x) is not contained in ker P(x) or the
    lower constant degenerates.
    """
    if Pf.dim != Qf.dim:
        raise ContractViolationError("fields have different dimensions")
    pts = _as_batch(sample_points, Qf.dim)
    if len(pts) == 0:
        raise ContractViolationError("sample_points must be nonempty")
    Ps = Pf.batch(pts)
    Qs = Qf.batch(pts)
    lam, U = np.linalg.eigh(Qs)
    pnorm = 1.0 + np.abs(Ps).max(axis=(1, 2))

    c1 = np.inf
    C1 = 0.0
    seen_range = False
    for i in range(len(pts)):
        cutoff = tol * lam[i, -1]
        in_range = lam[i] > cutoff
        U_r = U[i][:, in_range]
        U_k = U[i][:, ~in_range]
        if U_k.shape[1] and float(np.abs(Ps[i] @ U_k).max(initial=0.0)) > tol * pnorm[i]:
            raise NotComparableError(
                f"ker Q not contained in ker P at point {pts[i]}", point=pts[i])
        if not np.any(in_range):
            continue
        seen_range = True
        scale = 1.0 / np.sqrt(lam[i][in_range])
        B = (U_r * scale).T @ Ps[i] @ (U_r * scale)
        w = np.linalg.eigvalsh(0.5 * (B + B.T))
        if w[0] <= tol:
            raise NotComparableError(
                f"lower comparability constant degenerates at point {pts[i]} "
                f"(value {w[0]:.3e})", point=pts[i])
        c1 = min(c1, float(w[0]))
        C1 = max(C1, float(w[-1]))
    if not seen_range:
        raise NotComparableError("reference form vanishes at every sampled point")
    return c1, C1


def subunit_rows_of_sqrtP(Pf: SymMatrixField, C1: float, x) -> np.ndarray:
    """Rows of sqrt(P(x))/sqrt(C1), shape (n, n); each row is subunit for any
    form Q with P <= C1*Q at x."""
    if C1 <= 0:
        raise ContractViolationError("C1 must be positive")
    S = sqrt_psd(Pf.at(x))
    return S / np.sqrt(C1)


def sqrt_rows_tuple(Pf: SymMatrixField, C1: float) -> VectorFieldTuple:
    """The n-tuple of vectorfields whose rows are sqrt(P(x))/sqrt(C1)."""
    if C1 <= 0:
        raise ContractViolationError("C1 must be positive")
    root = np.sqrt(C1)

    def ev(pts):
        return sqrt_field_batch(Pf, pts) / root

    return VectorFieldTuple(Pf.dim, Pf.dim, ev)
