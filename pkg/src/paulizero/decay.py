"""Decay bootstrap for zero modes: exponent iteration, envelope inequalities,
the partial-wave radial system and sphere-norm decay fits.

For a zero mode ``psi = g`` the radial equation is

    d_r g + (K + 1)/r g = sigma_A g,    sigma_A(r w) = i (sigma.w)(sigma.A(r w)),

and ``g_+`` / ``g_-`` are the parts of g on channels with kappa > 0 / kappa < 0.
"""

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .gauge import PowerLawDecayFit
from .spinors import ChannelBasis, SIGMA, SphereQuadrature, TruncationWarning, partial_wave_project

APPLIES_TO = ("sphere_norm_sq_plus", "sphere_norm_sq_minus", "bar_plus")


def _rational(x, name):
    try:
        return Fraction(x)
    except (TypeError, ValueError) as exc:
        raise TypeError(f"{name} must be rational (int, Fraction or decimal string)") from exc


@dataclass
class BootstrapState:
    """Exact-rational state of the exponent iteration eps_{k+1} = min(eps_k + alpha, 4)."""

    epsilon: Fraction
    alpha: Fraction
    step: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if not self.history:
            self.history = [self.epsilon]

    def advance(self):
        if self.done:
            return self
        self.epsilon = min(self.epsilon + self.alpha, Fraction(4))
        self.step += 1
        self.history.append(self.epsilon)
        return self

    @property
    def done(self):
        return self.epsilon >= 4


def bootstrap_exponents(p, alpha):
    """Iterate the squared-sphere-norm decay exponent from ``3/p`` up to 4.

    Returns the final ``BootstrapState``; ``state.history`` is the full
    sequence and ``state.step`` the step count, which equals
    ``ceil((4 - 3/p) / alpha)``.
    """
    p = _rational(p, "p")
    alpha = _rational(alpha, "alpha")
    if p < 2:
        raise ValueError("p must be >= 2 (the L^p hypothesis requires it)")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    state = BootstrapState(Fraction(3) / p, alpha)
    while not state.done:
        state.advance()
    assert state.step == math.ceil((4 - Fraction(3) / p) / alpha)
    return state


@dataclass(frozen=True)
class DecayEnvelope:
    """A bound on a sphere-norm quantity for r >= valid_from.

    For ``sphere_norm_sq_plus`` / ``sphere_norm_sq_minus`` the bound is
    ``C r^-exponent``. For ``bar_plus`` (the squared norm of r^2 g_+) it is
    ``C |r^-exponent - r1^-exponent| + boundary``, or
    ``C ln(r / r1) + boundary`` when ``resonant``.
    """

    C: float
    exponent: float
    valid_from: float
    applies_to: str
    boundary: float = 0.0
    resonant: bool = False

    def __post_init__(self):
        if self.applies_to not in APPLIES_TO:
            raise ValueError(f"applies_to must be one of {APPLIES_TO}")
        if not (np.isfinite(self.C) and np.isfinite(self.exponent)) or self.C < 0:
            raise ValueError("envelope constant must be finite and >= 0, exponent finite")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.applies_to != "bar_plus":
            return self.C * r**-self.exponent
        r1 = self.valid_from
        if self.resonant:
            return self.C * np.log(r / r1) + self.boundary
        return self.C * np.abs(r**-self.exponent - r1**-self.exponent) + self.boundary


def propagate_envelopes(C, C_A, epsilon, alpha, r1=1.0, C1=0.0, plus_prefactor=4.0,
                        minus_prefactor=2.0):
    """One step of the envelope inequalities.

    Input: ``||g||^2(r) <= C r^-epsilon`` and ``||sigma_A(r .)|| <= C_A r^(-1-alpha)``
    for r >= r1. Output ``(bar_plus, minus)``::

        ||r^2 g_+||^2(r) <= plus_prefactor C C_A / (4 - epsilon - alpha) (r^(4-epsilon-alpha) - r1^(...)) + C1
        ||g_-||^2(r)     <= minus_prefactor C C_A / (epsilon + alpha) r^(-epsilon-alpha)

    ``C1`` is the value of ``||r^2 g_+||^2`` at r1. With C bounding the total
    ``||g||^2`` both default prefactors are valid (2 is sharp for either); if
    C only bounds each of ``||g_+||^2`` and ``||g_-||^2``, use ``2 sqrt 2``.
    At ``epsilon + alpha = 4`` the plus envelope is logarithmic.
    """
    if epsilon + alpha <= 0:
        raise ValueError("epsilon + alpha must be > 0")
    if C < 0 or C_A < 0 or r1 <= 0:
        raise ValueError("C, C_A must be >= 0 and r1 > 0")
    s = epsilon + alpha
    q = 4 - s
    if q == 0:
        plus = DecayEnvelope(plus_prefactor * C * C_A, 0.0, r1, "bar_plus", C1, resonant=True)
    else:
        plus = DecayEnvelope(plus_prefactor * C * C_A / abs(q), -q, r1, "bar_plus", C1)
    minus = DecayEnvelope(minus_prefactor * C * C_A / s, s, r1, "sphere_norm_sq_minus")
    return plus, minus


def plus_envelope_from_bar(bar_plus):
    """Turn ``||r^2 g_+||^2 <= ...`` into a power-law bound on ``||g_+||^2``.

    For r >= r1 and growth exponent q = 4 - s > 0 the bound
    ``r^-4 (c (r^q - r1^q) + C1)`` is at most ``(c + C1 r1^-q) r^-s``. In the
    resonant case ``ln(r/r1) <= r/r1`` gives ``((c + C1) / r1) r^-3``; for
    q < 0 the bracket is at most ``c r1^q`` and the exponent is 4.
    """
    r1 = bar_plus.valid_from
    c = bar_plus.C
    c1 = max(bar_plus.boundary, 0.0)
    if bar_plus.resonant:
        return DecayEnvelope(c / r1 + c1 / r1, 3.0, r1, "sphere_norm_sq_plus")
    q = -bar_plus.exponent
    if q < 0:
        return DecayEnvelope(c * r1**q + c1, 4.0, r1, "sphere_norm_sq_plus")
    return DecayEnvelope(c + c1 * r1**-q, 4.0 - q, r1, "sphere_norm_sq_plus")


# ---------------------------------------------------------------------------
# radial system


@dataclass
class RadialSolution:
    radii: np.ndarray
    channels: list
    amplitudes: np.ndarray  # (n_radii, n_channels)
    truncation_residual: np.ndarray  # ||(1 - Pi) sigma_A g|| / ||sigma_A g|| per radius
    nfev: int

    @property
    def kappas(self):
        return np.array([k for k, _ in self.channels])

    @property
    def norm_plus(self):
        return np.sqrt(np.sum(np.abs(self.amplitudes[:, self.kappas > 0]) ** 2, axis=1))

    @property
    def norm_minus(self):
        return np.sqrt(np.sum(np.abs(self.amplitudes[:, self.kappas < 0]) ** 2, axis=1))


class CouplingMatrices:
    """``M(r)_{ij} = <Omega_i, sigma_A(r .) Omega_j>`` with a per-radius cache."""

    def __init__(self, A, kappa_max, quad_degree=None):
        self.A = A
        self.basis = ChannelBasis(kappa_max, SphereQuadrature(
            2 * int(kappa_max) + 4 if quad_degree is None else int(quad_degree)))
        self._cache = {}
        q = self.basis.quad
        # i sigma.w at each node, (n_nodes, 2, 2)
        self._isw = 1j * np.einsum("qk,kab->qab", q.nodes, SIGMA)

    def sigma_A(self, r):
        a = np.asarray(self.A(r * self.basis.quad.nodes), dtype=float)
        sa = np.einsum("qk,kab->qab", a, SIGMA)
        return self._isw @ sa

    def __call__(self, r):
        key = float(r)
        m = self._cache.get(key)
        if m is None:
            op = self.sigma_A(r)
            v = self.basis.values  # (q, c, 2)
            w = self.basis.quad.weights
            m = np.einsum("q,qia,qab,qjb->ij", w, v.conj(), op, v)
            self._cache[key] = m
        return m

    def truncation_residual(self, r, coeffs):
        """Relative norm of sigma_A g outside the channel span."""
        op = self.sigma_A(r)
        g = self.basis.synthesize(coeffs)
        full = np.einsum("qab,qb->qa", op, g)
        w = self.basis.quad.weights
        tot = np.sqrt(np.einsum("q,qa->", w, np.abs(full) ** 2).real)
        inside = np.linalg.norm(self(r) @ coeffs)
        if tot == 0:
            return 0.0
        return float(np.sqrt(max(tot**2 - inside**2, 0.0)) / tot)


def integrate_radial_system(A, kappa_max, r_start, r_end, initial, *, r_eval=None,
                            quad_degree=None, rtol=1e-11, atol=1e-14, method="DOP853"):
    """Integrate the coupled channel amplitudes from ``r_start`` to ``r_end``.

    ``A`` is a potential (``GaugePotential`` or callable ``(n, 3) -> (n, 3)``;
    ``None`` means A = 0). ``initial`` holds the amplitudes at ``r_start`` in
    the order of ``channels(kappa_max)``. ``r_end < r_start`` gives the inward
    sweep. Raises ``RuntimeError`` if the adaptive integrator fails (e.g.
    step-size underflow).
    """
    if r_start <= 0 or r_end <= 0:
        raise ValueError("radii must be positive")
    if int(kappa_max) < 1:
        raise ValueError("kappa_max must be >= 1")
    ev = (lambda x: np.zeros_like(x)) if A is None else getattr(A, "evaluator", A)
    cm = CouplingMatrices(ev, kappa_max, quad_degree)
    kp1 = cm.basis.kappas + 1.0
    y0 = np.asarray(initial, dtype=complex).ravel()
    if y0.shape != (len(cm.basis),):
        raise ValueError(f"initial must have {len(cm.basis)} channel amplitudes")
    if r_eval is None:
        r_eval = np.linspace(r_start, r_end, 50)
    r_eval = np.asarray(r_eval, dtype=float)

    def rhs(r, y):
        return cm(r) @ y - kp1 / r * y

    sol = solve_ivp(rhs, (r_start, r_end), y0, method=method, t_eval=r_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"radial integration failed: {sol.message}")
    amps = sol.y.T
    resid = np.array([cm.truncation_residual(r, a) for r, a in zip(sol.t, amps)])
    if np.any(resid > 1e-6):
        warnings.warn(f"channel truncation residual up to {resid.max():.2e}", TruncationWarning,
                      stacklevel=2)
    return RadialSolution(sol.t, cm.basis.channels, amps, resid, sol.nfev)


def r_max_sensitivity(A, kappa_max, r_max, r_end, initial_at, **kwargs):
    """Inward sweeps from ``r_max`` and ``2 r_max`` down to ``r_end``.

    ``initial_at(r)`` supplies starting amplitudes (zero or an envelope value
    stands in for data at infinity). Returns ``(solution, relative change of
    the amplitudes at r_end under the doubling)``.
    """
    a = integrate_radial_system(A, kappa_max, r_max, r_end, initial_at(r_max),
                                r_eval=[r_end], **kwargs)
    b = integrate_radial_system(A, kappa_max, 2 * r_max, r_end, initial_at(2 * r_max),
                                r_eval=[r_end], **kwargs)
    ya, yb = a.amplitudes[-1], b.amplitudes[-1]
    scale = max(np.linalg.norm(yb), np.finfo(float).tiny)
    return a, float(np.linalg.norm(ya - yb) / scale)


# ---------------------------------------------------------------------------
# decay fits


@dataclass
class ChannelDecay:
    exponent: Optional[float]
    constant: Optional[float]
    residual: Optional[float]
    super_polynomial: bool = False
    note: str = ""


@dataclass
class SphereNormDecay:
    radii: np.ndarray
    norm_plus: np.ndarray
    norm_minus: np.ndarray
    plus: ChannelDecay
    minus: ChannelDecay

    @property
    def exponents(self):
        return self.plus.exponent, self.minus.exponent


def fit_power_law(radii, norms, vanish_tol=1e-300, curvature_tol=0.25):
    """Fit ``norms ~ C r^-e``; flags super-polynomial decay.

    Decay is called super-polynomial when the local log-log slope keeps
    steepening across the window by more than ``curvature_tol`` relative.
    The reported exponent is then the steepest local slope, a lower bound.
    """
    radii = np.asarray(radii, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if np.all(norms <= vanish_tol):
        return ChannelDecay(None, None, None, note="channel vanishes on the window; skipped")
    if np.any(norms <= vanish_tol):
        return ChannelDecay(None, None, None, note="channel vanishes at some radii; skipped")
    est = PowerLawDecayFit().fit(radii, norms)
    local = -np.diff(np.log(norms)) / np.diff(np.log(radii))
    third = max(1, len(local) // 3)
    head, tail = np.mean(local[:third]), np.mean(local[-third:])
    steepening = np.all(np.diff(local) > 0) and tail > (1 + curvature_tol) * max(head, 1e-12)
    if steepening:
        return ChannelDecay(float(np.max(local)), None, est.residual_, True,
                            "super-polynomial: exceeds every fitted window slope")
    return ChannelDecay(est.exponent_, est.constant_, est.residual_)


def fit_sphere_norm_decay(psi, radii, kappa_max=4, quad=None, tol=1e-6):
    """Project ``psi`` on spherical spinors at ``radii`` and fit the decay of
    ``||g_+||`` and ``||g_-||`` on log-log axes."""
    radii = np.asarray(radii, dtype=float)
    if radii.size < 3 or np.any(np.diff(radii) <= 0):
        raise ValueError("need at least 3 increasing radii")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        proj = partial_wave_project(psi, kappa_max, radii, quad=quad, tol=tol)
    total = np.maximum(proj.sphere_norms, np.finfo(float).tiny)

    def fit(norms):
        # a channel is "vanishing" when it is roundoff relative to psi everywhere
        if np.all(norms <= 1e-12 * total):
            return ChannelDecay(None, None, None, note="channel vanishes on the window; skipped")
        return fit_power_law(radii, norms)

    return SphereNormDecay(radii, proj.norm_plus, proj.norm_minus,
                           fit(proj.norm_plus), fit(proj.norm_minus))
