"""Magnetic field models, hypothesis checks and zero-mode triples.

Every built-in field is the curl of an explicit potential, so it is
divergence free up to the finite-difference error of whoever checks it.
Lengths and field strengths are dimensionless.
"""

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import _fd
from ._validation import check_directions, check_points, check_positive
from .spinors import SIGMA, SphereQuadrature, sigma_dot_apply


class HypothesisError(ValueError):
    """A field violates an assumption (integrability, decay) of the analysis."""


@dataclass(frozen=True)
class DecayBound:
    """Envelope ``|V(x)| <= C |x|^-exponent`` for ``|x| >= radius``.

    For magnetic fields ``exponent = 2 + beta``; for potentials ``1 + alpha``.
    """

    C: float
    rate: float  # beta for fields, alpha for potentials
    radius: float

    def __post_init__(self):
        check_positive(self.C, "C", strict=False)
        check_positive(self.rate, "decay rate")
        check_positive(self.radius, "radius", strict=False)


@dataclass
class MagneticField:
    """A magnetic field ``B: R^3 -> R^3`` with optional decay metadata.

    ``scale`` is the length over which the field is concentrated; quadrature
    routines place their panel breaks relative to it.
    """

    evaluator: Callable
    label: str = "field"
    decay: Optional[DecayBound] = None
    scale: float = 1.0

    def __call__(self, x):
        pts, single = check_points(x)
        out = np.asarray(self.evaluator(pts), dtype=float)
        return out[0] if single else out

    def scaled(self, c, label=None):
        ev = self.evaluator
        decay = None
        if self.decay is not None:
            decay = DecayBound(abs(c) * self.decay.C, self.decay.rate, self.decay.radius)
        return MagneticField(lambda x: c * ev(x), label or f"{c}*{self.label}", decay, self.scale)


@dataclass
class GaugePotential:
    """A vector potential with a gauge tag and optional decay metadata."""

    evaluator: Callable
    gauge: str = "closed_form"
    decay: Optional[DecayBound] = None
    label: str = "potential"

    def __post_init__(self):
        if self.gauge not in ("biot_savart", "closed_form"):
            raise ValueError(f"unknown gauge tag {self.gauge!r}")

    def __call__(self, x):
        pts, single = check_points(x)
        out = np.asarray(self.evaluator(pts), dtype=float)
        return out[0] if single else out


def eval_field(field, x):
    """Evaluate ``field`` at a point (returns (3,)) or points (returns (n, 3))."""
    return field(x)


def divergence(field, x, h):
    """Centered-difference divergence of a field at points ``x``."""
    pts, single = check_points(x)
    d = _fd.divergence(field.evaluator, pts, check_positive(h, "h"))
    return float(d[0]) if single else d


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass
class NormEstimate:
    value: float
    error: float
    tail: float


@dataclass
class DecayReport:
    radii: np.ndarray
    ratios: np.ndarray  # max over directions of |B(x)| |x|^(2 + beta)
    C: float
    beta: float
    passed: bool


def _shell_integrals(field, p, radii, quad):
    out = np.empty(len(radii))
    for i, r in enumerate(radii):
        mag = np.linalg.norm(field.evaluator(r * quad.nodes), axis=1)
        out[i] = quad.integrate(mag**p)
    return out


def _panel_sum(field, p, a, b, order, quad):
    t, w = np.polynomial.legendre.leggauss(order)
    r = 0.5 * (b - a) * t + 0.5 * (a + b)
    s = _shell_integrals(field, p, r, quad)
    return 0.5 * (b - a) * np.sum(w * r**2 * s)


def lp_norm(field, p, *, angular_degree=24, order=16, rtol=1e-10, r_max=None, max_depth=30):
    """``(int |B|^p dx)^(1/p)`` by adaptive radial shells plus a power-law tail.

    Radial panels double in width out to ``r_max`` (default ``64 * scale``)
    and are bisected until Gauss-Legendre orders ``order`` and ``2 * order``
    agree. Beyond ``r_max`` the shell integral is extrapolated as a power law
    fitted to the last two shells. The error combines the radial
    discrepancy, an angular check at twice the degree, and the spread of
    two tail extrapolations. A tail that is not summable raises
    ``HypothesisError``.
    """
    p = float(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    s = field.scale
    r_max = 64.0 * s if r_max is None else float(r_max)
    quad = SphereQuadrature(angular_degree)
    breaks = [0.0, 0.25 * s]
    while breaks[-1] < r_max:
        breaks.append(min(2 * breaks[-1], r_max))

    def adapt(a, b, depth):
        coarse = _panel_sum(field, p, a, b, order, quad)
        fine = _panel_sum(field, p, a, b, 2 * order, quad)
        if abs(fine - coarse) <= rtol * max(abs(fine), 1e-300) or depth >= max_depth:
            return fine, abs(fine - coarse)
        m = 0.5 * (a + b)
        left, right = adapt(a, m, depth + 1), adapt(m, b, depth + 1)
        return left[0] + right[0], left[1] + right[1]

    total, err = 0.0, 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        v, e = adapt(a, b, 0)
        total += v
        err += e

    # angular resolution check on a few representative shells
    fine_quad = SphereQuadrature(2 * angular_degree)
    probe = np.array(breaks[1:])
    diff = np.abs(_shell_integrals(field, p, probe, fine_quad) - _shell_integrals(field, p, probe, quad))
    widths = np.diff(breaks)
    err += float(np.sum(diff * probe**2 * widths))

    # power-law tail beyond r_max
    r3 = np.array([r_max / 4, r_max / 2, r_max])
    shells = _shell_integrals(field, p, r3, quad)
    tail, tail_err = 0.0, 0.0
    if shells[-1] > 0:
        slopes = []
        for lo, hi in ((0, 1), (1, 2)):
            if shells[lo] <= 0:
                slopes.append(np.inf)
            else:
                slopes.append(np.log(shells[lo] / shells[hi]) / np.log(2.0))
        if slopes[1] <= 3.0:
            raise HypothesisError(
                f"|B|^{p:g} shell integrals decay like r^-{slopes[1]:.3g}; "
                "the L^p tail is not summable"
            )
        tails = [shells[-1] * r_max**3 / (q - 3.0) if np.isfinite(q) and q > 3 else 0.0 for q in slopes]
        tail = tails[1]
        tail_err = abs(tails[1] - tails[0])
    total += tail
    err += tail_err
    value = total ** (1.0 / p) if total > 0 else 0.0
    dvalue = (value / (p * total)) * err if total > 0 else err ** (1.0 / p)
    return NormEstimate(value, dvalue, tail)


def fibonacci_directions(n):
    """Quasi-uniform unit vectors on the sphere (deterministic)."""
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + 5**0.5) * i
    rho = np.sqrt(1 - z**2)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def decay_report(field, radii, directions=None, *, C=None, beta=None, rtol=1e-12):
    """Check ``|B(x)| <= C_B |x|^(-2-beta)`` on sampled radii and directions.

    ``C`` and ``beta`` default to the field's decay metadata.
    """
    meta = field.decay
    if meta is None and (C is None or beta is None):
        raise ValueError("field has no decay metadata; pass C and beta")
    C = meta.C if C is None else float(C)
    beta = meta.rate if beta is None else float(beta)
    r0 = meta.radius if meta is not None else 0.0
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(radii < r0):
        raise ValueError(f"radii must be >= r0 = {r0}")
    dirs = fibonacci_directions(64) if directions is None else check_directions(directions)
    ratios = np.empty(len(radii))
    for i, r in enumerate(radii):
        mag = np.linalg.norm(field.evaluator(r * dirs), axis=1)
        ratios[i] = np.max(mag) * r ** (2 + beta)
    passed = bool(np.all(ratios <= C * (1 + rtol)))
    return DecayReport(radii, ratios, C, beta, passed)


# ---------------------------------------------------------------------------
# built-in fields


def gaussian_swirl(amplitude=1.0, decay=DecayBound(1.0, 1.0, 3.0)):
    """B = curl A_t with A_t(x) = a exp(-|x|^2) (-y, x, 0) (Coulomb gauge).

    Returns ``(field, potential)``.
    """
    a = float(amplitude)

    def potential(x):
        e = a * np.exp(-np.sum(x**2, axis=1))
        return np.stack([-x[:, 1] * e, x[:, 0] * e, np.zeros(len(x))], axis=1)

    def bfield(x):
        X, Y, Z = x[:, 0], x[:, 1], x[:, 2]
        e = a * np.exp(-(X**2 + Y**2 + Z**2))
        return np.stack([2 * X * Z * e, 2 * Y * Z * e, (2 - 2 * X**2 - 2 * Y**2) * e], axis=1)

    if decay is not None and a != 1.0:
        decay = DecayBound(abs(a) * decay.C, decay.rate, decay.radius)
    field = MagneticField(bfield, "gaussian-swirl", decay, scale=1.0)
    pot = GaugePotential(potential, "closed_form", None, "gaussian-swirl")
    return field, pot


def zero_field():
    field = MagneticField(lambda x: np.zeros((len(x), 3)), "zero", DecayBound(0.0, 1.0, 0.0))
    pot = GaugePotential(lambda x: np.zeros((len(x), 3)), "closed_form", None, "zero")
    return field, pot


# ---------------------------------------------------------------------------
# zero-mode triples


@dataclass
class ZeroModeTriple:
    potential: GaugePotential
    field: MagneticField
    spinor: Callable
    seed: np.ndarray
    gradient: Optional[Callable] = dc_field(default=None, repr=False)


def _pinned_potential(psi_vals, grad_vals):
    # chi = sigma.p psi = -i sum_k sigma_k d_k psi
    chi = -1j * np.einsum("kab,nkb->na", SIGMA, grad_vals)
    n2 = np.sum(np.abs(psi_vals) ** 2, axis=1)
    a = np.einsum("na,nja->nj", psi_vals.conj(), np.einsum("jab,nb->nja", SIGMA, chi)).real
    return a / n2[:, None], chi


def derive_pair_from_spinor(psi, grad=None, hess=None, *, probe_points=None, fd_step=1e-3,
                            consistency_tol=1e-6, label="derived"):
    """Build ``(A, B = curl A, psi)`` with ``sigma.(p - A) psi = 0``.

    Where ``psi`` does not vanish, ``sigma.p psi = (sigma.A) psi`` fixes
    ``A_j = Re<psi, sigma_j (sigma.p) psi> / |psi|^2``. ``grad(x)`` returns
    ``d_k psi`` with shape (n, 3, 2) and ``hess(x)`` returns ``d_l d_k psi``
    with shape (n, 3, 3, 2); missing derivatives fall back to fourth-order
    finite differences with step ``fd_step``.

    Raises ``ValueError`` if psi vanishes at a probe point, or if the pinned
    potential does not annihilate psi there (then no real potential does).
    """
    if grad is None:
        def grad(x):
            return _fd.gradient(psi, x, fd_step, order=4)

    def potential(x):
        return _pinned_potential(psi(x), grad(x))[0]

    if hess is None:
        def bfield(x):
            return _fd.curl(potential, x, fd_step, order=4)
    else:
        def bfield(x):
            p = psi(x)
            g = grad(x)
            H = hess(x)
            a, chi = _pinned_potential(p, g)
            n2 = np.sum(np.abs(p) ** 2, axis=1)
            # d_l chi = -i sum_k sigma_k d_l d_k psi
            dchi = -1j * np.einsum("kab,nlkb->nla", SIGMA, H)
            s_chi = np.einsum("jab,nb->nja", SIGMA, chi)
            s_p = np.einsum("jab,nb->nja", SIGMA, p)  # sigma Hermitian: <p, s dchi> = <s p, dchi>
            num = (np.einsum("nla,nja->nlj", g.conj(), s_chi)
                   + np.einsum("nja,nla->nlj", s_p.conj(), dchi)).real
            dn2 = 2 * np.einsum("na,nla->nl", p.conj(), g).real
            dA = num / n2[:, None, None] - a[:, None, :] * (dn2 / n2[:, None])[:, :, None]  # dA[n,l,j] = d_l A_j
            return np.stack([dA[:, 1, 2] - dA[:, 2, 1], dA[:, 2, 0] - dA[:, 0, 2],
                             dA[:, 0, 1] - dA[:, 1, 0]], axis=1)

    if probe_points is None:
        rng = np.random.default_rng(12345)
        probe_points = np.vstack([np.zeros((1, 3)), rng.uniform(-4, 4, size=(63, 3))])
    probes, _ = check_points(probe_points)
    vals = psi(probes)
    mags = np.linalg.norm(vals, axis=1)
    if np.any(mags <= 1e-300):
        raise ValueError("spinor vanishes at a probe point; the pinning formula needs psi != 0")
    a, chi = _pinned_potential(vals, grad(probes))
    resid = np.linalg.norm(chi - sigma_dot_apply(a, vals), axis=1) / mags
    if np.max(resid) > consistency_tol:
        raise ValueError(
            f"no real potential annihilates psi (pinning residual {np.max(resid):.2e})"
        )
    pot = GaugePotential(potential, "closed_form", None, label)
    fld = MagneticField(bfield, label)
    return ZeroModeTriple(pot, fld, psi, np.asarray(vals[0] / mags[0]), grad)


def loss_yau_spinor(phi0=(1.0, 0.0)):
    """psi(x) = (1 + |x|^2)^(-3/2) (I + i sigma.x) phi0 with its first and
    second derivatives in closed form. Returns ``(psi, grad, hess)``."""
    phi0 = np.asarray(phi0, dtype=complex)
    phi0 = phi0 / np.linalg.norm(phi0)
    s_phi = np.einsum("kab,b->ka", SIGMA, phi0)  # sigma_k phi0, (3, 2)

    def parts(x):
        q = 1.0 + np.sum(x**2, axis=1)
        u = phi0[None, :] + 1j * np.einsum("nk,ka->na", x, s_phi)
        return q, u

    def psi(x):
        q, u = parts(x)
        return q[:, None] ** -1.5 * u

    def grad(x):
        q, u = parts(x)
        f = q**-1.5
        df = -3.0 * x * (q**-2.5)[:, None]  # (n, 3)
        return df[:, :, None] * u[:, None, :] + 1j * f[:, None, None] * s_phi[None, :, :]

    def hess(x):
        q, u = parts(x)
        df = -3.0 * x * (q**-2.5)[:, None]
        ddf = (-3.0 * np.eye(3)[None] * (q**-2.5)[:, None, None]
               + 15.0 * np.einsum("nl,nk->nlk", x, x) * (q**-3.5)[:, None, None])
        return (ddf[..., None] * u[:, None, None, :]
                + 1j * df[:, :, None, None] * s_phi[None, None, :, :]
                + 1j * df[:, None, :, None] * s_phi[None, :, None, :])

    return psi, grad, hess


def loss_yau_triple(phi0=(1.0, 0.0)):
    """The Loss-Yau-type zero-mode triple derived from ``loss_yau_spinor``.

    |B| = 12 (1 + |x|^2)^-2 <= 12 |x|^-4, recorded as C_B = 12, beta = 2,
    r0 = 1. The derived potential is not in Coulomb gauge.
    """
    psi, grad, hess = loss_yau_spinor(phi0)
    triple = derive_pair_from_spinor(psi, grad, hess, label="loss-yau-derived")
    triple.field.decay = DecayBound(12.0, 2.0, 1.0)
    triple.field.scale = 1.0
    triple.potential.decay = DecayBound(3.0, 1.0, 0.0)
    return triple


# ---------------------------------------------------------------------------
# registry and JSON documents

BUILTINS = ("gaussian-swirl", "loss-yau-derived", "zero")


def _parse_complex(v):
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def _decay_from(doc, default):
    if doc is None:
        return default
    return DecayBound(float(doc["C_B"]), float(doc["beta"]), float(doc.get("r0", 0.0)))


def build_field(label, kind=None, params=None, decay=None):
    """Instantiate a field by name. Returns ``(field, potential, triple)``;
    ``triple`` is ``None`` unless the field is derived from a spinor."""
    params = dict(params or {})
    if label == "gaussian-swirl" or kind == "gaussian-swirl":
        fld, pot = gaussian_swirl(params.get("amplitude", 1.0))
        fld.decay = _decay_from(decay, fld.decay)
        return fld, pot, None
    if label == "loss-yau-derived" or kind == "derived":
        phi0 = [_parse_complex(v) for v in params.get("phi0", [1.0, 0.0])]
        triple = loss_yau_triple(phi0)
        triple.field.decay = _decay_from(decay, triple.field.decay)
        triple.field.label = triple.potential.label = label
        return triple.field, triple.potential, triple
    if label == "zero" or kind == "zero":
        fld, pot = zero_field()
        return fld, pot, None
    raise KeyError(f"unknown field {label!r}; built-ins are {', '.join(BUILTINS)}")


def load_field(source):
    """Load a field from a built-in label, a JSON path, or a parsed document.

    Document schema: ``{"label", "kind": "builtin" | "derived", "params",
    "decay": {"C_B", "beta", "r0"}}``. For ``kind = "builtin"`` the label
    names the built-in; ``"derived"`` builds the Loss-Yau-type triple from
    ``params.phi0``.
    """
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, str) and source in BUILTINS:
        return build_field(source)
    else:
        path = Path(source)
        if not path.is_file():
            raise FileNotFoundError(f"field file not found: {path}")
        doc = json.loads(path.read_text())
    kind = doc.get("kind", "builtin")
    if kind not in ("builtin", "derived"):
        raise ValueError(f"unknown field kind {kind!r}")
    label = doc.get("label")
    if not label:
        raise ValueError("field document needs a label")
    name = doc.get("params", {}).get("name", label) if kind == "builtin" else label
    fld, pot, triple = build_field(name, None if kind == "builtin" else "derived", doc.get("params"),
                                   doc.get("decay"))
    fld.label = pot.label = label
    return fld, pot, triple
