"""Discrete Rayleigh quotient (g, P_A g) / (g, |B| g) on a Cartesian box.

The Dirac-type operator D ~ sigma.(-i grad - A) is discretized with centered
differences and zero exterior values. With either coupling scheme D is
Hermitian, so the Pauli form is ``P = D^2`` and ``(g, P g) = ||D g||^2``.
"""

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.fft
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg, lobpcg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive
from .spinors import SpinorGrid


class DegenerateFormError(ValueError):
    """The weight form vanishes identically on the grid."""


class ConvergenceError(RuntimeError):
    """The eigensolver stopped before reaching its tolerance."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class CartesianGrid:
    """Cell-centred grid on [-L, L]^3 with ``n = 2L/h`` points per axis."""

    h: float
    L: float

    def __post_init__(self):
        check_positive(self.h, "h")
        check_positive(self.L, "L")
        ratio = 2 * self.L / self.h
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 2:
            raise ValueError(f"2L/h must be an integer >= 2, got {ratio}")

    @classmethod
    def from_points(cls, n, L):
        return cls(2 * L / n, L)

    @property
    def n(self):
        return int(round(2 * self.L / self.h))

    @property
    def axis(self):
        return -self.L + (np.arange(self.n) + 0.5) * self.h

    def points(self):
        ax = self.axis
        return np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)

    @property
    def shape(self):
        return (self.n, self.n, self.n, 2)


def _shift(g, axis, step):
    """out[i] = g[i + step] along ``axis``, zero outside the box."""
    out = np.zeros_like(g)
    n = g.shape[axis]
    src = [slice(None)] * g.ndim
    dst = [slice(None)] * g.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, n), slice(0, n - step)
    else:
        src[axis], dst[axis] = slice(0, n + step), slice(-step, n)
    out[tuple(dst)] = g[tuple(src)]
    return out


def _sigma_combine(dx, dy, dz):
    """sum_k sigma_k d_k for spinor-valued d_k; spin is axis 3."""
    up = dz[:, :, :, 0] + dx[:, :, :, 1] - 1j * dy[:, :, :, 1]
    dn = dx[:, :, :, 0] + 1j * dy[:, :, :, 0] - dz[:, :, :, 1]
    return np.stack([up, dn], axis=3)


def _sigma_a(a, g):
    """(sigma.A) g pointwise; ``a`` is (n, n, n, 3), ``g`` is (n, n, n, 2[, k])."""
    extra = (None,) * (g.ndim - 4)
    ax, ay, az = (a[(slice(None),) * 3 + (c,) + extra] for c in range(3))
    up, dn = g[:, :, :, 0], g[:, :, :, 1]
    return np.stack([az * up + (ax - 1j * ay) * dn, (ax + 1j * ay) * up - az * dn], axis=3)


@dataclass
class FormPair:
    """The quadratic forms h^3 ||D g||^2 and h^3 sum |B| |g|^2 on a grid."""

    grid: CartesianGrid
    A: np.ndarray  # (n, n, n, 3) potential at grid points
    weight: np.ndarray  # (n, n, n) = |B| at grid points
    coupling: str = "pointwise"
    links: list = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.coupling not in ("pointwise", "peierls"):
            raise ValueError("coupling must be 'pointwise' or 'peierls'")
        if np.any(self.weight < 0):
            raise ValueError("weight must be nonnegative")

    @property
    def size(self):
        return 2 * self.grid.n**3

    def _cov_diff(self, g, axis):
        h = self.grid.h
        if self.coupling == "pointwise":
            return (_shift(g, axis, 1) - _shift(g, axis, -1)) / (2 * h)
        U = self.links[axis][(...,) + (None,) * (g.ndim - 3)]  # link i -> i+1
        n = g.shape[axis]
        fwd = np.zeros_like(g)
        bwd = np.zeros_like(g)
        hi = [slice(None)] * g.ndim
        lo = [slice(None)] * g.ndim
        hi[axis], lo[axis] = slice(1, n), slice(0, n - 1)
        hi, lo = tuple(hi), tuple(lo)
        fwd[lo] = U * g[hi]
        bwd[hi] = U.conj() * g[lo]
        return (fwd - bwd) / (2 * h)

    def apply_D(self, g):
        """Apply D to a grid spinor (n, n, n, 2), a flat vector, or a block of
        flat vectors (N, k); the output has the input's shape."""
        in_shape = g.shape
        if g.ndim == 2 and g.shape[0] == self.size:
            g = g.reshape(self.grid.shape + (g.shape[1],))
        elif g.ndim != 5:
            g = g.reshape(self.grid.shape)
        d = [self._cov_diff(g, k) for k in range(3)]
        out = -1j * _sigma_combine(*d)
        if self.coupling == "pointwise":
            out -= _sigma_a(self.A, g)
        return out.reshape(in_shape)

    def apply_P(self, g):
        return self.apply_D(self.apply_D(g))

    def p_form(self, g):
        Dg = self.apply_D(g)
        return float(self.grid.h**3 * np.vdot(Dg, Dg).real)

    def b_form(self, g):
        g = np.asarray(g).reshape(self.grid.shape)
        return float(self.grid.h**3 * np.sum(self.weight * np.sum(np.abs(g) ** 2, axis=-1)))


def _sample(evaluator, pts):
    flat = pts.reshape(-1, 3)
    return np.asarray(evaluator(flat), dtype=float).reshape(pts.shape)


def assemble_forms(A, B, grid, coupling="pointwise", tail_fraction=1e-2):
    """Sample ``A`` and ``|B|`` on ``grid`` and build the form pair.

    A ``UserWarning`` reports the fraction of the field's |B| mass that falls
    outside the box when it exceeds ``tail_fraction`` (estimated from the
    decay metadata when present).
    """
    pts = grid.points()
    a = _sample(A.evaluator, pts)
    w = np.linalg.norm(_sample(B.evaluator, pts), axis=-1)
    links = None
    if coupling == "peierls":
        h = grid.h
        links = []
        for k in range(3):
            mid = pts.take(np.arange(grid.n - 1), axis=k).copy()
            mid[..., k] += h / 2
            a_mid = _sample(A.evaluator, mid)[..., k]
            links.append(np.exp(-1j * h * a_mid))
    decay = getattr(B, "decay", None)
    if decay is not None and decay.C > 0 and decay.rate > 1:
        # exterior L^1 mass of C r^(-2-beta) beyond the inscribed sphere
        outside = 4 * np.pi * decay.C * grid.L ** (1 - decay.rate) / (decay.rate - 1)
        inside = grid.h**3 * float(np.sum(w))
        if inside > 0 and outside > tail_fraction * inside:
            warnings.warn(
                f"box L={grid.L:g} leaves an estimated {outside / inside:.2e} of |B| mass outside",
                UserWarning,
                stacklevel=2,
            )
    return FormPair(grid, a, w, coupling, links)


# ---------------------------------------------------------------------------
# preconditioner


class FreeDiracPreconditioner:
    """Exact inverse of ``D_0^2 + shift`` for the free centered-difference
    operator with zero exterior values.

    Along each axis the centered difference has eigenvectors
    ``i^m sin(m theta_j)``, ``theta_j = j pi / (n + 1)``, and ``-T^2`` has
    eigenvalues ``cos(theta_j)^2 / h^2``; a twisted DST-I diagonalizes it.
    """

    def __init__(self, grid, shift):
        n, h = grid.n, grid.h
        theta = np.arange(1, n + 1) * np.pi / (n + 1)
        c2 = np.cos(theta) ** 2 / h**2
        self.denom = c2[:, None, None] + c2[None, :, None] + c2[None, None, :] + shift
        t = (1j) ** np.arange(1, n + 1)
        self.twist = t[:, None, None] * t[None, :, None] * t[None, None, :]
        self.shape = grid.shape
        self.size = 2 * n**3

    @staticmethod
    def _dst(g):
        re = scipy.fft.dstn(g.real, type=1, axes=(0, 1, 2), norm="ortho")
        im = scipy.fft.dstn(g.imag, type=1, axes=(0, 1, 2), norm="ortho")
        return re + 1j * im

    def __call__(self, g):
        in_shape = g.shape
        g = g.reshape(self.shape + ((g.shape[1],) if g.ndim == 2 and g.shape[0] == self.size else ()))
        extra = (None,) * (g.ndim - 3)
        tw = self.twist[(...,) + extra]
        y = self._dst(g / tw) / self.denom[(...,) + extra]
        return (self._dst(y) * tw).reshape(in_shape)


# ---------------------------------------------------------------------------
# eigensolver


def delta_surrogate(lambda_min):
    """``lambda / (1 + lambda)``: one minus the largest value of ||S f||^2."""
    lam = float(lambda_min)
    if not lam >= 0:
        raise ValueError(f"lambda_min must be >= 0, got {lambda_min!r}")
    return lam / (1.0 + lam)


@dataclass
class RayleighResult:
    lambda_min: float
    minimizer: np.ndarray
    delta_surrogate: float
    iterations: int
    residual: float
    residual_history: list


class RayleighQuotientMinimizer(BaseEstimator):
    """Smallest generalized eigenvalue of ``P g = lambda W g``.

    Uses LOBPCG with matrix-free applications of D and W. When W vanishes on
    part of the grid, the unknowns there are eliminated (they minimize P for
    fixed values on the support of W) through an inner conjugate-gradient
    solve, giving a Schur-complement problem on the support.

    Parameters
    ----------
    tol : float
        Residual tolerance for the eigenpair, relative to ``lambda``'s scale.
    max_iter : int
    n_vectors : int
        LOBPCG block size; more than one helps with the doubled spectrum of
        centered differences.
    preconditioner : {"free", None}
        ``"free"`` uses the exact inverse of the shifted free operator.
    shift : float or None
        Preconditioner shift; defaults to the mean weight on the support.
    random_state : int
        Seed of the initial block.
    """

    def __init__(self, tol=1e-8, max_iter=2000, n_vectors=4, preconditioner="free",
                 shift=None, random_state=0):
        self.tol = tol
        self.max_iter = max_iter
        self.n_vectors = n_vectors
        self.preconditioner = preconditioner
        self.shift = shift
        self.random_state = random_state

    def fit(self, forms, y=None):
        check_positive(self.tol, "tol")
        w = forms.weight.ravel()
        if not np.any(w > 0):
            raise DegenerateFormError("|B| vanishes at every grid point")
        support = np.repeat(w > 0, 2)  # both spin components share the weight
        N = forms.size
        P = forms.apply_P
        prec = None
        if self.preconditioner == "free":
            shift = float(np.mean(w[w > 0])) if self.shift is None else float(self.shift)
            prec = FreeDiracPreconditioner(forms.grid, shift)
        elif self.preconditioner is not None:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")

        if support.all():
            n_act = N
            wdiag = np.repeat(w, 2)
            apply_A = P
            to_full = None
        else:
            # eliminate the zero-weight unknowns: Schur complement on supp W
            idx_s = np.flatnonzero(support)
            idx_o = np.flatnonzero(~support)
            n_act = idx_s.size
            wdiag = np.repeat(w, 2)[idx_s]

            def embed(vs, vo):
                full = np.zeros(N, dtype=complex)
                full[idx_s] = vs
                full[idx_o] = vo
                return full

            P_oo = LinearOperator((idx_o.size, idx_o.size), dtype=complex,
                                  matvec=lambda v: P(embed(0, v.ravel()))[idx_o])

            def solve_off(vs):
                rhs = -P(embed(vs, 0))[idx_o]
                x, info = cg(P_oo, rhs, rtol=1e-14, atol=0.0, maxiter=20 * idx_o.size)
                if info != 0:
                    raise ConvergenceError("inner solve on the zero-weight region failed", info)
                return x

            def to_full(vs):
                return embed(vs, solve_off(vs))

            def apply_A(V):
                if V.ndim == 1:
                    return P(to_full(V))[idx_s]
                return np.column_stack([P(to_full(V[:, j]))[idx_s] for j in range(V.shape[1])])

            prec = None

        k = max(1, min(self.n_vectors, n_act // 5))
        rng = np.random.default_rng(self.random_state)
        X = rng.standard_normal((n_act, k)) + 1j * rng.standard_normal((n_act, k))

        Aop = LinearOperator((n_act, n_act), dtype=complex, matvec=apply_A, matmat=apply_A)
        Bop = LinearOperator((n_act, n_act), dtype=complex,
                             matvec=lambda v: wdiag * v.ravel(),
                             matmat=lambda V: wdiag[:, None] * V)
        Mop = None
        if prec is not None:
            Mop = LinearOperator((n_act, n_act), dtype=complex, matvec=prec, matmat=prec)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            lam, vecs, _, res_hist = lobpcg(
                Aop, X, B=Bop, M=Mop, tol=self.tol, maxiter=self.max_iter, largest=False,
                retLambdaHistory=True, retResidualNormsHistory=True,
            )
        j = int(np.argmin(lam))
        v = vecs[:, j]
        v = v / np.sqrt(np.real(np.vdot(v, wdiag * v)))
        Av = apply_A(v)
        lam_j = float(np.real(np.vdot(v, Av)))
        resid = float(np.linalg.norm(Av - lam_j * wdiag * v))
        history = [float(np.min(np.abs(r))) for r in res_hist]
        if resid > 10 * self.tol:
            raise ConvergenceError(
                f"LOBPCG stopped after {len(history)} iterations with residual {resid:.3e}", resid
            )
        full = v if to_full is None else to_full(v)
        g = full.reshape(forms.grid.shape)
        g = g / np.sqrt(forms.b_form(g))
        # fix the global phase so that output is reproducible
        k0 = int(np.argmax(np.abs(g.ravel())))
        g = g * np.exp(-1j * np.angle(g.ravel()[k0]))
        lam_j = max(lam_j, 0.0)
        self.lambda_min_ = lam_j
        self.minimizer_ = g
        self.delta_surrogate_ = delta_surrogate(lam_j)
        self.n_iter_ = len(history)
        self.residual_ = resid
        self.residual_history_ = history
        return self

    def result(self):
        check_is_fitted(self, "lambda_min_")
        return RayleighResult(self.lambda_min_, self.minimizer_, self.delta_surrogate_,
                              self.n_iter_, self.residual_, self.residual_history_)


def minimize_quotient(forms, **opts):
    """Functional front end to ``RayleighQuotientMinimizer``."""
    return RayleighQuotientMinimizer(**opts).fit(forms).result()


def zero_mode_residual(A, psi, grid=None):
    """``||D psi|| / ||psi||`` with h^3-weighted grid norms.

    For a ``SpinorGrid`` the exterior is zero (as in ``assemble_forms``).
    For an evaluator, ``psi`` is also sampled one layer beyond the box, so
    the stencil sees the true exterior values and no artificial boundary
    layer enters.
    """
    if isinstance(psi, SpinorGrid):
        grid = CartesianGrid(psi.h, psi.L)
        vals = psi.values
        Bdummy = np.zeros(grid.shape[:3])
        forms = FormPair(grid, _sample(A.evaluator, grid.points()), Bdummy)
        Dg = forms.apply_D(vals)
    else:
        if grid is None:
            raise ValueError("grid is required for an evaluator")
        h, n = grid.h, grid.n
        ax = -grid.L + (np.arange(-1, n + 1) + 0.5) * h
        pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
        ext = np.asarray(psi(pts.reshape(-1, 3)), dtype=complex).reshape(n + 2, n + 2, n + 2, 2)
        inner = (slice(1, -1),) * 3
        vals = ext[inner]
        d = []
        for k in range(3):
            hi = [slice(1, -1)] * 3
            lo = [slice(1, -1)] * 3
            hi[k], lo[k] = slice(2, None), slice(0, -2)
            d.append((ext[tuple(hi)] - ext[tuple(lo)]) / (2 * h))
        a = _sample(A.evaluator, pts[inner])
        Dg = -1j * _sigma_combine(*d) - _sigma_a(a, vals)
    num = np.sqrt(np.sum(np.abs(Dg) ** 2))
    den = np.sqrt(np.sum(np.abs(vals) ** 2))
    if den == 0:
        raise ValueError("psi vanishes on the grid")
    return float(num / den)


def dense_matrices(forms):
    """Dense P and W (for small grids only)."""
    N = forms.size
    if N > 8192:
        raise ValueError("grid too large for a dense solve")
    eye = np.eye(N, dtype=complex)
    P = np.column_stack([forms.apply_P(eye[:, j]).ravel() for j in range(N)])
    W = np.repeat(forms.weight.ravel(), 2)
    return P, W
