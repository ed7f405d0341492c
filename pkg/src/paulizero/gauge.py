"""Biot-Savart gauge, curl checks and the explicit decay bound for A.

Normalization: ``A(x) = (1/4pi) int B(y) x (x - y) / |x - y|^3 dy``, the
constant for which ``curl A = B`` and ``div A = 0`` for divergence-free,
decaying B.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, optimize
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import _fd
from ._validation import check_points, check_positive
from .fields import DecayBound, GaugePotential, HypothesisError, fibonacci_directions
from .spinors import SphereQuadrature


class NonConvergentTailError(HypothesisError):
    """The Biot-Savart integral does not converge at infinity."""

    def __init__(self, message, tail_estimate):
        super().__init__(message)
        self.tail_estimate = tail_estimate


@dataclass(frozen=True)
class BiotSavartQuadrature:
    """Quadrature layout for ``biot_savart``.

    Points with ``|x| <= direct_radius * scale`` are integrated in spherical
    shells centred at x, where the Jacobian cancels the kernel singularity.
    Farther points split the integrand with a smooth cutoff of radius
    ``|x|/2`` around x: the near piece keeps x-centred shells, the rest uses
    origin-centred shells on which the kernel is smooth.
    """

    angular_degree: int = 47
    radial_order: int = 16
    panel_width: float = 0.5  # in units of the field scale
    reach: float = 6.0  # radial extent beyond |x| before the tail map
    direct_radius: float = 4.0

    @cached_property
    def sphere(self):
        return SphereQuadrature(self.angular_degree)

    @cached_property
    def gauss(self):
        return np.polynomial.legendre.leggauss(self.radial_order)


def _panels(breaks, gauss):
    t, w = gauss
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        nodes.append(0.5 * (b - a) * t + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _uniform_breaks(a, b, width):
    n = max(1, int(np.ceil((b - a) / width)))
    return list(np.linspace(a, b, n + 1))


def _tail_nodes(R, gauss):
    """Nodes/weights for int_R^inf f(r) dr through r = R / u."""
    t, w = gauss
    u = 0.5 * (t + 1)
    return R / u, 0.5 * w * R / u**2


def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1 - t, 1.0)), 0.0)
    return a / (a + b)


_CUT_INNER = 0.2  # the cutoff is 1 below this fraction of its radius
_SPLIT = 0.7  # cutoff radius as a fraction of |x|


def _cutoff(rho, d):
    """1 for rho <= _CUT_INNER d, 0 for rho >= d, smooth in between."""
    a = _CUT_INNER * d
    return 1.0 - _smooth_step((rho - a) / (d - a))


def _frame(axis):
    """Rotation whose third column is ``axis``."""
    axis = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return np.stack([e1, e2, axis], axis=1)


def _check_tail(field, x_norm, scale):
    """Raise if |B| decays too slowly along rays for int B d(rho) to converge."""
    dirs = fibonacci_directions(26)
    R = 10.0 * (x_norm + scale)
    m1 = np.max(np.linalg.norm(field.evaluator(R * dirs), axis=1))
    m2 = np.max(np.linalg.norm(field.evaluator(100 * R * dirs), axis=1))
    if m2 == 0:
        return
    q = np.log(m1 / m2) / np.log(100.0) if m1 > 0 else 0.0
    if q <= 1.0:
        raise NonConvergentTailError(
            f"|B| decays like r^-{q:.3g} along rays; the Biot-Savart tail diverges", np.inf
        )
    tail = m2 * 100 * R / (q - 1.0)
    if not np.isfinite(tail):
        raise NonConvergentTailError("Biot-Savart tail estimate is not finite", tail)


def _sum_shells(field, rho, wr, omega, sph, kernel, chunk=200_000):
    """sum_i wr_i * int_S2 kernel(rho_i, omega) over radial nodes, batched."""
    per = max(1, chunk // len(omega))
    total = np.zeros(3)
    for k in range(0, len(rho), per):
        r, w = rho[k:k + per], wr[k:k + per]
        vals = kernel(r, omega)  # (len(r), n_omega, 3)
        total += np.einsum("i,j,ijk->k", w, sph.weights, vals)
    return total


def _x_centred(field, x, quad, breaks, weight_fn=None, tail_from=None):
    rho, wr = _panels(breaks, quad.gauss)
    if tail_from is not None:
        rt, wt = _tail_nodes(tail_from, quad.gauss)
        rho, wr = np.concatenate([rho, rt]), np.concatenate([wr, wt])
    if weight_fn is not None:
        wr = wr * weight_fn(rho)
    keep = wr != 0.0
    rho, wr = rho[keep], wr[keep]
    sph = quad.sphere
    omega = sph.nodes

    def kernel(r, om):
        y = x[None, None, :] + r[:, None, None] * om[None, :, :]
        b = field.evaluator(y.reshape(-1, 3)).reshape(y.shape)
        return np.cross(om[None, :, :], b)

    return _sum_shells(field, rho, wr, omega, sph, kernel) / (4 * np.pi)


def _origin_centred(field, x, quad, d):
    s = field.scale
    xn = np.linalg.norm(x)
    omega = quad.sphere.nodes @ _frame(x).T
    inner = min(quad.reach * s, xn - d)
    breaks = _uniform_breaks(0.0, inner, quad.panel_width * s)
    if xn - d > inner:
        breaks += list(np.geomspace(inner, xn - d, 5)[1:])
    breaks += list(np.linspace(xn - d, xn + d, 9)[1:])
    breaks += list(np.geomspace(xn + d, 4 * (xn + d), 5)[1:])
    r, wr = _panels(breaks, quad.gauss)
    rt, wt = _tail_nodes(breaks[-1], quad.gauss)
    r, wr = np.concatenate([r, rt]), np.concatenate([wr, wt])

    def kernel(rr, om):
        y = rr[:, None, None] * om[None, :, :]
        diff = x[None, None, :] - y
        dist = np.linalg.norm(diff, axis=-1)
        mask = 1.0 - _cutoff(dist, d)
        b = field.evaluator(y.reshape(-1, 3)).reshape(y.shape)
        return np.cross(b, diff) * (mask / dist**3 * rr[:, None] ** 2)[..., None]

    return _sum_shells(field, r, wr, omega, quad.sphere, kernel) / (4 * np.pi)


def biot_savart(field, x, quad=None):
    """Coulomb-gauge potential of ``field`` at ``x`` ((3,) or (n, 3))."""
    quad = BiotSavartQuadrature() if quad is None else quad
    pts, single = check_points(x)
    s = field.scale
    out = np.empty_like(pts)
    for i, p in enumerate(pts):
        xn = float(np.linalg.norm(p))
        _check_tail(field, xn, s)
        if xn <= quad.direct_radius * s:
            rho_max = xn + quad.reach * s
            breaks = _uniform_breaks(0.0, rho_max, quad.panel_width * s)
            out[i] = _x_centred(field, p, quad, breaks, tail_from=rho_max)
        else:
            # inside the cutoff ball B varies on the scale |x|/2, not on `scale`
            d = _SPLIT * xn
            w = max(quad.panel_width * s, d / 8)
            a = _CUT_INNER * d
            breaks = _uniform_breaks(0.0, a, w) + _uniform_breaks(a, d, 0.5 * w)[1:]
            near = _x_centred(field, p, quad, breaks, weight_fn=lambda rho: _cutoff(rho, d))
            out[i] = near + _origin_centred(field, p, quad, d)
    return out[0] if single else out


def biot_savart_potential(field, quad=None, decay=None):
    """Wrap ``biot_savart`` as a ``GaugePotential`` tagged ``biot_savart``."""
    return GaugePotential(lambda x: biot_savart(field, x, quad), "biot_savart", decay, field.label)


class BiotSavartGauge(TransformerMixin, BaseEstimator):
    """Estimator-style front end: ``fit`` stores the field, ``transform``
    maps points (n, 3) to potentials (n, 3)."""

    def __init__(self, angular_degree=47, radial_order=16, panel_width=0.5, reach=6.0,
                 direct_radius=4.0):
        self.angular_degree = angular_degree
        self.radial_order = radial_order
        self.panel_width = panel_width
        self.reach = reach
        self.direct_radius = direct_radius

    def fit(self, field, y=None):
        self.field_ = field
        self.quad_ = BiotSavartQuadrature(self.angular_degree, self.radial_order,
                                          self.panel_width, self.reach, self.direct_radius)
        return self

    def transform(self, X):
        check_is_fitted(self, "field_")
        pts, _ = check_points(X, allow_single=False)
        return biot_savart(self.field_, pts, self.quad_)

    def potential(self):
        check_is_fitted(self, "field_")
        return biot_savart_potential(self.field_, self.quad_)


def curl_residual(A, B, x, h):
    """``|curl_h A(x) - B(x)|`` with second-order centered differences."""
    pts, single = check_points(x)
    h = check_positive(h, "h")
    c = _fd.curl(A.evaluator, pts, h)
    res = np.linalg.norm(c - B.evaluator(pts), axis=1)
    return float(res[0]) if single else res


# ---------------------------------------------------------------------------
# explicit decay bound


def _log_kernel(t):
    return np.log((1 + t) / np.abs(1 - t))


def split_integral_constants(beta):
    """(C1, C2) with
    2 pi int_tau^inf t^(-beta-1) ln((1+t)/|1-t|) dt <= C1 tau^-beta + C2
    for all 0 < tau <= 1/2, splitting the range at t = 1/2.

    C2 is the integral over [1/2, inf); C1 is the supremum over tau of
    tau^beta times the integral over [tau, 1/2].
    """
    beta = check_positive(beta, "beta")

    def f(t):
        return t ** (-beta - 1) * _log_kernel(t)

    c2 = sum(integrate.quad(f, a, b, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
             for a, b in ((0.5, 1.0), (1.0, 2.0), (2.0, np.inf)))

    def scaled_head(log_tau):
        # tau^beta int_tau^(1/2) f(t) dt with t = tau e^s; smooth in s
        def g(s):
            t = np.exp(log_tau + s)
            return np.exp(-beta * s) * _log_kernel(t)

        return integrate.quad(g, 0.0, np.log(0.5) - log_tau, limit=200, epsabs=1e-15, epsrel=1e-12)[0]

    grid = np.linspace(np.log(1e-10), np.log(0.5), 200)
    vals = np.array([scaled_head(g) for g in grid])
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda g: -scaled_head(g), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    c1 = max(vals[i], -res.fun)
    return 2 * np.pi * c1, 2 * np.pi * c2


@dataclass
class Lemma3Constants:
    """Constants of the decay bound ``|A|(x) <= envelope(|x|)``, |x| >= r1."""

    r1: float
    alpha: float
    beta: float
    C1: float
    C2: float
    C_B: float
    norm_B_32: float
    kernel_prefactor: float

    @staticmethod
    def r_x(r):
        """Radius of the inner ball used for the split: |x|^(1/2) / 2."""
        return np.sqrt(r) / 2

    def near_term(self, r):
        return self.kernel_prefactor * self.norm_B_32 * (2**5 * np.pi / 3) ** (1 / 3) * np.asarray(r) ** -1.5

    def far_term(self, r):
        r = np.asarray(r, dtype=float)
        return self.kernel_prefactor * self.C_B * (
            self.C1 * 2**self.beta * r ** (-1 - self.beta / 2) + self.C2 * r ** (-1 - self.beta)
        )

    def envelope(self, r):
        return self.near_term(r) + self.far_term(r)

    def decay_bound(self):
        """A single power law C_A r^(-1-alpha) dominating the envelope on r >= r1."""
        r1 = self.r1
        c = self.envelope(r1) * r1 ** (1 + self.alpha)
        return DecayBound(float(c), self.alpha, r1)


def lemma3_envelope(C_B, beta, r0, norm_B_32, kernel_prefactor=4 * np.pi):
    """Decay bound for the Biot-Savart potential of a field with
    ``|B| <= C_B |x|^(-2-beta)`` beyond ``r0``.

    ``r1 = max((2 r0)^2, 1)``, ``alpha = min(1/2, beta/2)``, and for
    ``|x| >= r1``::

        |A|(x) <= K ||B||_{3/2} (2^5 pi/3)^(1/3) |x|^(-3/2)
                  + K C_B (C1 2^beta |x|^(-1-beta/2) + C2 |x|^(-1-beta))

    ``K`` is the prefactor in front of ``int |B(y)| |x-y|^-2 dy``. The default
    4 pi matches the bound as commonly printed; the potential computed by
    ``biot_savart`` satisfies it with the smaller ``K = 1/(4 pi)``.
    """
    if not beta > 0:
        raise ValueError("beta must be > 0")
    C_B = check_positive(C_B, "C_B", strict=False)
    r0 = check_positive(r0, "r0", strict=False)
    norm_B_32 = check_positive(norm_B_32, "norm_B_32", strict=False)
    c1, c2 = split_integral_constants(beta)
    return Lemma3Constants(
        r1=max((2 * r0) ** 2, 1.0),
        alpha=min(0.5, beta / 2),
        beta=float(beta),
        C1=c1,
        C2=c2,
        C_B=C_B,
        norm_B_32=norm_B_32,
        kernel_prefactor=float(kernel_prefactor),
    )


# ---------------------------------------------------------------------------
# decay fits


def fit_decay_exponent(samples):
    """Least-squares fit of ``log m = log C - e log r``.

    ``samples`` is a sequence of ``(r, magnitude)`` pairs. Returns
    ``(exponent, constant, residual)`` where the residual is the RMS misfit
    in log space.
    """
    est = PowerLawDecayFit().fit(*np.asarray(samples, dtype=float).T)
    return est.exponent_, est.constant_, est.residual_


class PowerLawDecayFit(RegressorMixin, BaseEstimator):
    """Fit ``m(r) ~ C r^-e`` on log-log axes."""

    def fit(self, r, m):
        r = np.asarray(r, dtype=float).ravel()
        m = np.asarray(m, dtype=float).ravel()
        if r.shape != m.shape or r.size < 3:
            raise ValueError("need at least 3 (r, magnitude) samples")
        if np.any(np.diff(r) <= 0) or r[0] <= 0:
            raise ValueError("radii must be positive and increasing")
        if np.any(m <= 0):
            raise ValueError("magnitudes must be positive for a log-log fit")
        lr, lm = np.log(r), np.log(m)
        slope, intercept = np.polyfit(lr, lm, 1)
        self.exponent_ = float(-slope)
        self.constant_ = float(np.exp(intercept))
        self.residual_ = float(np.sqrt(np.mean((lm - (intercept + slope * lr)) ** 2)))
        return self

    def predict(self, r):
        check_is_fitted(self, "exponent_")
        return self.constant_ * np.asarray(r, dtype=float) ** -self.exponent_

    def score(self, r, m, sample_weight=None):
        """R^2 in log space."""
        check_is_fitted(self, "exponent_")
        lm = np.log(np.asarray(m, dtype=float))
        pred = np.log(self.predict(r))
        return 1.0 - np.sum((lm - pred) ** 2) / np.sum((lm - lm.mean()) ** 2)
