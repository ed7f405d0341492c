"""Pauli algebra, spherical spinors and the angular operator K = -1 - sigma.L.

Conventions
-----------
Spherical harmonics carry the Condon-Shortley phase (``scipy.special.sph_harm_y``).
Spherical spinors use the Dirac ``kappa`` labelling::

    kappa < 0:  l = -kappa - 1,  j = l + 1/2
    kappa > 0:  l = kappa,       j = l - 1/2

so that ``K Omega_{kappa,m} = kappa Omega_{kappa,m}``. Only phase-independent
statements (eigenvalues, norms, orthogonality) are relied upon elsewhere.
"""

import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import sph_harm_y

from ._validation import check_points, check_positive, check_spinor_values

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


class TruncationWarning(UserWarning):
    """A spinor was not resolved by the requested channel set."""


def sigma_dot(v):
    """Return ``v[0] sigma_1 + v[1] sigma_2 + v[2] sigma_3``.

    ``v`` may carry leading batch dimensions; the result has shape ``(..., 2, 2)``.
    """
    v = np.asarray(v)
    if v.shape[-1] != 3:
        raise ValueError("last axis of v must have length 3")
    return np.einsum("...k,kab->...ab", v, SIGMA)


def sigma_dot_apply(v, psi):
    """Apply ``sigma . v`` pointwise: ``v`` is (..., 3), ``psi`` is (..., 2)."""
    up, dn = psi[..., 0], psi[..., 1]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([vz * up + (vx - 1j * vy) * dn, (vx + 1j * vy) * up - vz * dn], axis=-1)


# ---------------------------------------------------------------------------
# sphere quadrature


@dataclass(frozen=True)
class SphereQuadrature:
    """Gauss-Legendre in cos(theta) times a uniform azimuthal rule.

    Integrates every polynomial of degree <= ``degree`` on the unit sphere
    exactly (in particular all products Y_lm^* Y_l'm' with l + l' <= degree).
    """

    degree: int

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValueError("degree must be a nonnegative integer")

    @cached_property
    def _rule(self):
        n_theta = self.degree // 2 + 1
        n_phi = self.degree + 1
        t, wt = np.polynomial.legendre.leggauss(n_theta)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        theta = np.arccos(t)
        th, ph = np.meshgrid(theta, phi, indexing="ij")
        w = np.outer(wt, np.full(n_phi, 2 * np.pi / n_phi))
        return th.ravel(), ph.ravel(), w.ravel()

    @property
    def theta(self):
        return self._rule[0]

    @property
    def phi(self):
        return self._rule[1]

    @property
    def weights(self):
        return self._rule[2]

    @cached_property
    def nodes(self):
        th, ph = self.theta, self.phi
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)

    def __len__(self):
        return len(self.weights)

    def integrate(self, values):
        """Integrate samples at the nodes (first axis) over the unit sphere."""
        return np.tensordot(self.weights, values, axes=(0, 0))


# ---------------------------------------------------------------------------
# spherical spinors


def _as_half_integer(m):
    two_m = Fraction(m) * 2
    if two_m.denominator != 1 or two_m.numerator % 2 == 0:
        raise ValueError(f"m must be a half-integer, got {m!r}")
    return Fraction(two_m.numerator, 2)


def kappa_to_l(kappa):
    if kappa == 0 or int(kappa) != kappa:
        raise ValueError(f"kappa must be a nonzero integer, got {kappa!r}")
    kappa = int(kappa)
    return -kappa - 1 if kappa < 0 else kappa


def channels(kappa_max):
    """All (kappa, m) with 1 <= |kappa| <= kappa_max, ordered by kappa then m."""
    if int(kappa_max) != kappa_max or kappa_max < 1:
        raise ValueError("kappa_max must be a positive integer")
    out = []
    for kappa in [*range(-kappa_max, 0), *range(1, kappa_max + 1)]:
        two_j = 2 * abs(kappa) - 1
        for two_m in range(-two_j, two_j + 1, 2):
            out.append((kappa, Fraction(two_m, 2)))
    return out


def _angles(omega):
    omega = np.asarray(omega, dtype=float)
    r = np.linalg.norm(omega, axis=-1)
    theta = np.arccos(np.clip(omega[..., 2] / r, -1.0, 1.0))
    phi = np.arctan2(omega[..., 1], omega[..., 0])
    return theta, phi


def _ylm(l, m, theta, phi):
    if abs(m) > l:
        return np.zeros_like(theta, dtype=complex)
    return sph_harm_y(l, m, theta, phi)


def spinor_coupling(kappa, m):
    """Clebsch-Gordan weights: returns ((c_up, m_up), (c_down, m_down), l)
    such that Omega = c_up Y_{l,m_up} chi_up + c_down Y_{l,m_down} chi_down."""
    l = kappa_to_l(kappa)
    m = _as_half_integer(m)
    if abs(m) > abs(kappa) - Fraction(1, 2):
        raise ValueError(f"|m| must be <= |kappa| - 1/2, got kappa={kappa}, m={m}")
    denom = 2 * l + 1
    plus = float(l + m + Fraction(1, 2)) / denom
    minus = float(l - m + Fraction(1, 2)) / denom
    if kappa < 0:  # j = l + 1/2
        c_up, c_dn = np.sqrt(plus), np.sqrt(minus)
    else:  # j = l - 1/2
        c_up, c_dn = -np.sqrt(minus), np.sqrt(plus)
    m_up = int(m - Fraction(1, 2))
    m_dn = int(m + Fraction(1, 2))
    return (c_up, m_up), (c_dn, m_dn), l


def spherical_spinor(kappa, m, omega):
    """Evaluate Omega_{kappa,m} at direction(s) ``omega`` (need not be normalized).

    Returns shape (2,) for one direction, (n, 2) for an array of directions.
    """
    pts, single = check_points(omega)
    (c_up, m_up), (c_dn, m_dn), l = spinor_coupling(kappa, m)
    theta, phi = _angles(pts)
    out = np.stack([c_up * _ylm(l, m_up, theta, phi), c_dn * _ylm(l, m_dn, theta, phi)], axis=1)
    return out[0] if single else out


class ChannelBasis:
    """The spherical spinors with |kappa| <= kappa_max sampled on a quadrature."""

    def __init__(self, kappa_max, quad=None):
        self.kappa_max = int(kappa_max)
        self.channels = channels(self.kappa_max)
        self.quad = quad if quad is not None else SphereQuadrature(2 * self.kappa_max + 4)
        self.kappas = np.array([k for k, _ in self.channels])

    def __len__(self):
        return len(self.channels)

    def evaluate(self, omega):
        """Shape (n, n_channels, 2)."""
        return np.stack([spherical_spinor(k, m, omega) for k, m in self.channels], axis=1)

    @cached_property
    def values(self):
        return self.evaluate(self.quad.nodes)

    def project(self, samples):
        """Channel coefficients <Omega_c, f> of node samples (n_nodes, 2) or
        (n_nodes, batch, 2); returns (n_channels,) or (batch, n_channels)."""
        w = self.quad.weights
        if samples.ndim == 2:
            return np.einsum("q,qca,qa->c", w, self.values.conj(), samples)
        return np.einsum("q,qca,qba->bc", w, self.values.conj(), samples)

    def synthesize(self, coeffs, omega=None):
        vals = self.values if omega is None else self.evaluate(omega)
        return np.einsum("qca,...c->...qa", vals, coeffs)


# ---------------------------------------------------------------------------
# inner products on spheres


def sphere_inner(f, g, quad):
    """<f, g> = integral over S^2 of f^dagger g, from samples at ``quad.nodes``."""
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if f.shape != g.shape or f.shape[0] != len(quad):
        raise ValueError("f and g must be sampled on the quadrature nodes")
    return complex(quad.integrate(np.sum(f.conj() * g, axis=-1)))


def sphere_norm(f, quad):
    return float(np.sqrt(max(sphere_inner(f, f, quad).real, 0.0)))


def sample_on_sphere(psi, r, quad):
    """Evaluate a spinor evaluator on the sphere of radius ``r``."""
    pts = r * quad.nodes
    return check_spinor_values(psi(pts), len(pts))


def apply_K(f, quad=None, kappa_max=4, tol=1e-8, return_residual=False):
    """Apply K = -1 - sigma.L to a spinor function on the unit sphere.

    ``f`` is either a callable on unit vectors or samples at ``quad.nodes``.
    K is applied spectrally: project on channels, multiply by kappa, resum.
    A ``TruncationWarning`` is emitted when the channels miss more than
    ``tol`` (relative L2) of ``f``.
    """
    basis = ChannelBasis(kappa_max, quad)
    quad = basis.quad
    samples = f(quad.nodes) if callable(f) else np.asarray(f, dtype=complex)
    samples = check_spinor_values(samples, len(quad))
    coeffs = basis.project(samples)
    resolved = basis.synthesize(coeffs)
    total = sphere_norm(samples, quad)
    residual = sphere_norm(samples - resolved, quad)
    if total > 0 and residual > tol * total:
        warnings.warn(
            f"channels up to kappa_max={kappa_max} miss {residual / total:.3e} of f",
            TruncationWarning,
            stacklevel=2,
        )
    out = basis.synthesize(basis.kappas * coeffs)
    return (out, residual) if return_residual else out


# ---------------------------------------------------------------------------
# grids and partial waves


@dataclass
class SpinorGrid:
    """Two-component spinor sampled at the cell centres of a cubic box.

    The axis coordinates are ``-L + (i + 1/2) h``; with ``n = 2L/h`` points
    per axis the origin is never a sample point.
    """

    values: np.ndarray
    h: float
    L: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        n = self.values.shape[0]
        if self.values.shape != (n, n, n, 2):
            raise ValueError("values must have shape (n, n, n, 2)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spinor samples must be finite")
        if abs(n * self.h - 2 * self.L) > 1e-9 * self.L:
            raise ValueError("grid requires n * h == 2 L")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def axis(self):
        return -self.L + (np.arange(self.n) + 0.5) * self.h

    @classmethod
    def from_evaluator(cls, psi, h, L):
        n = int(round(2 * L / h))
        ax = -L + (np.arange(n) + 0.5) * h
        pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
        vals = check_spinor_values(psi(pts), len(pts))
        return cls(vals.reshape(n, n, n, 2), h, L)

    def interpolator(self, method="cubic"):
        ax = self.axis
        interp = RegularGridInterpolator((ax, ax, ax), self.values, method=method)

        def psi(x):
            return interp(np.asarray(x, dtype=float))

        return psi


@dataclass
class PartialWaveProjection:
    """Channel amplitudes g_{kappa,m}(r) = <Omega_{kappa,m}, psi(r .)>."""

    radii: np.ndarray
    channels: list
    amplitudes: np.ndarray  # (n_radii, n_channels)
    sphere_norms: np.ndarray  # ||psi||(r) from direct quadrature
    residual: np.ndarray  # truncation residual per radius

    @property
    def kappas(self):
        return np.array([k for k, _ in self.channels])

    @property
    def norm_plus(self):
        """Sphere norm of g_+ (channels with kappa > 0)."""
        mask = self.kappas > 0
        return np.sqrt(np.sum(np.abs(self.amplitudes[:, mask]) ** 2, axis=1))

    @property
    def norm_minus(self):
        mask = self.kappas < 0
        return np.sqrt(np.sum(np.abs(self.amplitudes[:, mask]) ** 2, axis=1))

    def channel(self, kappa, m):
        return self.amplitudes[:, self.channels.index((kappa, Fraction(m)))]


def partial_wave_project(psi, kappa_max, radii, quad=None, tol=1e-6):
    """Project a spinor (evaluator or ``SpinorGrid``) on spherical spinors.

    The truncation residual is sqrt(||psi||^2 - sum |g|^2) per radius; a
    ``TruncationWarning`` is raised if it exceeds ``tol`` relative to ||psi||.
    """
    if isinstance(psi, SpinorGrid):
        psi = psi.interpolator()
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if quad is None:
        quad = SphereQuadrature(max(2 * int(kappa_max) + 8, 16))
    basis = ChannelBasis(kappa_max, quad)
    amps, norms = [], []
    for r in radii:
        samples = sample_on_sphere(psi, r, quad)
        amps.append(basis.project(samples))
        norms.append(sphere_norm(samples, quad))
    amps = np.array(amps)
    norms = np.array(norms)
    resid = np.sqrt(np.clip(norms**2 - np.sum(np.abs(amps) ** 2, axis=1), 0.0, None))
    bad = resid > tol * np.maximum(norms, np.finfo(float).tiny)
    if np.any(bad & (norms > 0)):
        worst = float(np.max(resid[norms > 0] / norms[norms > 0]))
        warnings.warn(
            f"partial-wave truncation residual up to {worst:.3e} (relative)",
            TruncationWarning,
            stacklevel=2,
        )
    return PartialWaveProjection(radii, basis.channels, amps, norms, resid)


# ---------------------------------------------------------------------------
# identities checked numerically


def _K_plus_one(psi, x, kappa_max, quad):
    """((K + 1) psi)(x), K acting on the sphere of radius |x|."""
    r = np.linalg.norm(x)
    basis = ChannelBasis(kappa_max, quad)
    coeffs = basis.project(sample_on_sphere(psi, r, quad))
    return basis.synthesize((basis.kappas + 1) * coeffs, omega=(x / r)[None, :])[0]


def radial_factorization_residual(psi, x, h, kappa_max=4, quad=None):
    """|sigma.p psi(x) - (-i) sigma.xhat (d_r + (K+1)/r) psi(x)|.

    Cartesian centered differences on the left, a radial centered
    difference plus spectral K on the right.
    """
    x = np.asarray(x, dtype=float)
    h = check_positive(h, "h")
    r = float(np.linalg.norm(x))
    if r < 10 * h:
        raise ValueError(f"|x| = {r:g} is below 10 h; the 1/r factor is too singular")
    if quad is None:
        quad = SphereQuadrature(2 * kappa_max + 8)

    def ev(p):
        p = np.atleast_2d(p)
        return check_spinor_values(psi(p), len(p))

    lhs = np.zeros(2, dtype=complex)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        dk = (ev(x + e)[0] - ev(x - e)[0]) / (2 * h)
        lhs += -1j * SIGMA[k] @ dk
    xhat = x / r
    d_r = (ev(x + h * xhat)[0] - ev(x - h * xhat)[0]) / (2 * h)
    inner = d_r + _K_plus_one(psi, x, kappa_max, quad) / r
    rhs = -1j * sigma_dot(xhat) @ inner
    return float(np.linalg.norm(lhs - rhs))


def sphere_norm_derivative_check(f, r, h, quad=None, deriv_step=1e-3, zero_tol=0.0):
    """Compare a centered difference of r -> ||f||(r) with
    ||f||^{-1} Re <f, d_r f> (or 0 where ||f||(r) vanishes).

    ``d_r f`` uses a fourth-order stencil with step ``deriv_step`` so that the
    returned residual is dominated by the O(h^2) error of the outer difference.
    """
    r = check_positive(r, "r")
    h = check_positive(h, "h")
    if h >= r:
        raise ValueError("h must be smaller than r")
    if quad is None:
        quad = SphereQuadrature(24)
    d_h = (sphere_norm(sample_on_sphere(f, r + h, quad), quad)
           - sphere_norm(sample_on_sphere(f, r - h, quad), quad)) / (2 * h)
    vals = sample_on_sphere(f, r, quad)
    norm = sphere_norm(vals, quad)
    if norm <= zero_tol:
        return abs(d_h)
    s = deriv_step
    d_r = (8 * (sample_on_sphere(f, r + s, quad) - sample_on_sphere(f, r - s, quad))
           - (sample_on_sphere(f, r + 2 * s, quad) - sample_on_sphere(f, r - 2 * s, quad))) / (12 * s)
    weak = sphere_inner(vals, d_r, quad).real / norm
    return abs(d_h - weak)
