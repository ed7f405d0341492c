"""Command-line entry point: ``paulizero <command> [options]``.

Exit status: 0 success, 1 hypothesis or validation failure (for example a
violated envelope), 2 usage or configuration error.
"""

import argparse
import json
import os
import sys
import warnings
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .decay import bootstrap_exponents, fit_sphere_norm_decay, integrate_radial_system
from .fields import HypothesisError, decay_report, fibonacci_directions, load_field, lp_norm
from .gauge import (BiotSavartQuadrature, NonConvergentTailError, biot_savart, biot_savart_potential,
                    curl_residual, fit_decay_exponent, lemma3_envelope)
from .quotient import CartesianGrid, ConvergenceError, DegenerateFormError, assemble_forms, \
    minimize_quotient, zero_mode_residual
from .spinors import TruncationWarning, partial_wave_project

COMMANDS = ("field", "gauge", "quotient", "verify", "decay", "bootstrap")
OUT_ENV = "PAULIZERO_OUT"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    field: str = "gaussian-swirl"
    h: float = 0.25
    L: float = 6.0
    angular_degree: int = 47
    radial_order: int = 16
    tol: float = 1e-8
    max_iter: int = 2000
    coupling: str = "pointwise"
    threads: int = 1
    out: str = "artifacts"
    # command specific
    p: str = "6"
    alpha: str = "1/2"
    kappa_max: int = 4
    r_start: float = 2.0
    r_end: float = 40.0
    n_radii: int = 8
    n_directions: int = 5
    kernel_prefactor: float = 4 * np.pi
    residual_tol: float = 0.0
    dump_minimizer: bool = False

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        for name in ("h", "L", "tol", "r_start", "r_end", "kernel_prefactor"):
            if not float(getattr(self, name)) > 0:
                raise UsageError(f"{name} must be > 0")
        for name in ("max_iter", "threads", "kappa_max", "n_radii", "n_directions",
                     "angular_degree", "radial_order"):
            if int(getattr(self, name)) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.coupling not in ("pointwise", "peierls"):
            raise UsageError("coupling must be 'pointwise' or 'peierls'")
        if self.residual_tol < 0:
            raise UsageError("residual_tol must be >= 0")
        return self


_RELEVANT = {
    "field": ("field",),
    "gauge": ("field", "h", "angular_degree", "radial_order", "n_radii", "n_directions",
              "kernel_prefactor"),
    "quotient": ("field", "h", "L", "tol", "max_iter", "coupling", "dump_minimizer"),
    "verify": ("field", "h", "L", "residual_tol"),
    "decay": ("field", "kappa_max", "r_start", "r_end", "n_radii"),
    "bootstrap": ("p", "alpha"),
}


def artifact_config(cfg):
    """The resolved config as embedded in artifacts.

    Only keys that influence the numbers are kept; the output directory is
    left out so that reruns into another directory produce identical bytes.
    """
    full = asdict(cfg)
    keys = ("command", "threads") + _RELEVANT[cfg.command]
    return {k: full[k] for k in keys}


def _parser():
    ap = argparse.ArgumentParser(prog="paulizero", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")

    def common(p, grid=False):
        p.add_argument("--field", help="built-in label or path to a field JSON document")
        p.add_argument("--threads", type=int, help="BLAS/LAPACK thread count (default 1)")
        p.add_argument("--out", help=f"output directory (env {OUT_ENV} overrides)")
        p.add_argument("--config", help="JSON file whose keys override the flags")
        if grid:
            p.add_argument("--h", type=float, help="grid spacing")
            p.add_argument("--L", type=float, help="box half-width")

    p = sub.add_parser("field", help="decay report and L^p norms")
    common(p)
    p = sub.add_parser("gauge", help="Biot-Savart gauge vs. the explicit decay envelope")
    common(p)
    p.add_argument("--h", type=float, help="finite-difference step for curl residuals")
    p.add_argument("--angular-degree", type=int)
    p.add_argument("--radial-order", type=int)
    p.add_argument("--n-radii", type=int)
    p.add_argument("--n-directions", type=int)
    p.add_argument("--kernel-prefactor", type=float)
    p = sub.add_parser("quotient", help="minimize the Rayleigh quotient")
    common(p, grid=True)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--coupling", choices=("pointwise", "peierls"))
    p.add_argument("--dump-minimizer", action="store_true", default=None)
    p = sub.add_parser("verify", help="zero-mode residual of a derived triple")
    common(p, grid=True)
    p.add_argument("--residual-tol", type=float, help="fail (exit 1) above this residual")
    p = sub.add_parser("decay", help="radial integration and sphere-norm decay fits")
    common(p)
    p.add_argument("--kappa-max", type=int)
    p.add_argument("--r-start", type=float)
    p.add_argument("--r-end", type=float)
    p.add_argument("--n-radii", type=int)
    p = sub.add_parser("bootstrap", help="exact exponent iteration table")
    common(p)
    p.add_argument("--p", help="Lebesgue exponent (rational, e.g. 6 or 7/2)")
    p.add_argument("--alpha", help="decay gain per step (rational)")
    return ap


def resolve_config(argv):
    """Flags, then config-file keys, then the output-directory env var."""
    args = vars(_parser().parse_args(argv))
    cfg_path = args.pop("config", None)
    values = {k: v for k, v in args.items() if v is not None}
    if cfg_path:
        path = Path(cfg_path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        known = {f.name for f in fields(RunConfig)} - {"command"}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(doc)
    if os.environ.get(OUT_ENV):
        values["out"] = os.environ[OUT_ENV]
    return RunConfig(**values).validate()


def _field(cfg):
    try:
        return load_field(cfg.field)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad field source {cfg.field!r}: {exc}") from exc


def _outdir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _decay_meta(field):
    d = field.decay
    return None if d is None else {"C_B": d.C, "beta": d.rate, "r0": d.radius}


# ---------------------------------------------------------------------------
# commands; each returns (exit_code, message)


def cmd_field(cfg):
    fld, _, _ = _field(cfg)
    if fld.decay is None:
        raise UsageError("field has no decay metadata (C_B, beta, r0)")
    r0 = max(fld.decay.radius, 1e-3)
    radii = np.geomspace(max(r0, fld.scale), 100 * max(r0, fld.scale), 24)
    rep = decay_report(fld, radii)
    norms = {}
    ok = rep.passed
    for p in (1.5, 2.0):
        try:
            est = lp_norm(fld, p)
            norms[format(p, "g")] = {"value": est.value, "error": est.error, "tail": est.tail}
        except HypothesisError as exc:
            norms[format(p, "g")] = {"error_message": str(exc)}
            ok = False
    payload = {
        "field_label": fld.label,
        "decay": _decay_meta(fld),
        "decay_report": {"radii": rep.radii, "ratios": rep.ratios, "passed": rep.passed},
        "lp_norms": norms,
    }
    io.write_json(_outdir(cfg) / "field.json", payload, artifact_config(cfg), "field")
    return (0 if ok else 1), f"decay bound {'holds' if rep.passed else 'VIOLATED'} on sampled rays"


def cmd_gauge(cfg):
    fld, _, _ = _field(cfg)
    if fld.decay is None:
        raise UsageError("field has no decay metadata (C_B, beta, r0)")
    quad = BiotSavartQuadrature(cfg.angular_degree, cfg.radial_order)
    n32 = lp_norm(fld, 1.5)
    consts = lemma3_envelope(fld.decay.C, fld.decay.rate, fld.decay.radius, n32.value + n32.error,
                             kernel_prefactor=cfg.kernel_prefactor)
    radii = np.geomspace(consts.r1, 10 * consts.r1, cfg.n_radii)
    dirs = fibonacci_directions(cfg.n_directions)
    rows, mags = [], np.empty((len(radii), len(dirs)))
    for i, r in enumerate(radii):
        vals = np.linalg.norm(biot_savart(fld, r * dirs, quad), axis=1)
        mags[i] = vals
        env = float(consts.envelope(r))
        for j, m in enumerate(vals):
            rows.append((r, j, m, env, bool(m <= env)))
    pot = biot_savart_potential(fld, quad)
    probes = 0.5 * fld.scale * fibonacci_directions(4) + 0.25 * fld.scale
    curl_res = curl_residual(pot, fld, probes, min(cfg.h, 0.05 * fld.scale))
    peak = mags.max(axis=1)
    fit = None
    if np.all(peak > 0):
        e, c, res = fit_decay_exponent(np.c_[radii, peak])
        fit = {"exponent": e, "constant": c, "residual": res}
    ok = all(r[-1] for r in rows)
    out = _outdir(cfg)
    io.write_csv(out / "gauge.csv", ["r", "direction_index", "abs_A", "envelope", "pass"], rows,
                 artifact_config(cfg), "gauge")
    payload = {
        "field_label": fld.label,
        "constants": {"r1": consts.r1, "alpha": consts.alpha, "C1": consts.C1, "C2": consts.C2,
                      "C_B": consts.C_B, "norm_B_32": consts.norm_B_32,
                      "kernel_prefactor": consts.kernel_prefactor},
        "all_within_envelope": ok,
        "decay_fit": fit,
        "curl_residuals": curl_res,
    }
    io.write_json(out / "gauge.json", payload, artifact_config(cfg), "gauge")
    return (0 if ok else 1), f"{sum(r[-1] for r in rows)}/{len(rows)} samples within the envelope"


def cmd_quotient(cfg):
    fld, pot, _ = _field(cfg)
    try:
        grid = CartesianGrid(cfg.h, cfg.L)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        forms = assemble_forms(pot, fld, grid, coupling=cfg.coupling)
    res = minimize_quotient(forms, tol=cfg.tol, max_iter=cfg.max_iter)
    payload = {
        "field_label": fld.label,
        "grid": {"h": grid.h, "L": grid.L, "n": grid.n},
        "coupling": cfg.coupling,
        "lambda_min": res.lambda_min,
        "delta_surrogate": res.delta_surrogate,
        "iterations": res.iterations,
        "residual": res.residual,
    }
    out = _outdir(cfg)
    io.write_json(out / "quotient.json", payload, artifact_config(cfg), "quotient")
    if cfg.dump_minimizer:
        io.save_minimizer(out / "minimizer.bin", res.minimizer,
                          {"schema_version": io.SCHEMA_VERSION, "config": artifact_config(cfg)})
    return 0, f"lambda_min = {res.lambda_min:.6g}"


def cmd_verify(cfg):
    fld, pot, triple = _field(cfg)
    if triple is None:
        raise UsageError(f"field {fld.label!r} carries no zero-mode spinor to verify")
    try:
        grid = CartesianGrid(cfg.h, cfg.L)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    r = zero_mode_residual(pot, triple.spinor, grid)
    ok = cfg.residual_tol == 0 or r <= cfg.residual_tol
    payload = {"field_label": fld.label, "grid": {"h": grid.h, "L": grid.L, "n": grid.n},
               "zero_mode_residual": r, "residual_tol": cfg.residual_tol, "passed": ok}
    io.write_json(_outdir(cfg) / "verify.json", payload, artifact_config(cfg), "verify")
    return (0 if ok else 1), f"zero-mode residual {r:.6g}"


def cmd_decay(cfg):
    fld, pot, triple = _field(cfg)
    if triple is None:
        raise UsageError(f"field {fld.label!r} carries no zero-mode spinor")
    if not cfg.r_end > cfg.r_start:
        raise UsageError("r_end must exceed r_start")
    radii = np.geomspace(cfg.r_start, cfg.r_end, max(cfg.n_radii, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        proj = partial_wave_project(triple.spinor, cfg.kappa_max, radii)
        sol = integrate_radial_system(pot, cfg.kappa_max, cfg.r_start, cfg.r_end,
                                      proj.amplitudes[0], r_eval=radii)
    direct = fit_sphere_norm_decay(triple.spinor, radii, cfg.kappa_max)
    # endpoint envelopes C r^-2 with the smallest C valid on the window
    c_plus = float(np.max(sol.norm_plus * radii**2))
    c_minus = float(np.max(sol.norm_minus * radii**2))
    rows = [(r, gp, gm, c_plus * r**-2, c_minus * r**-2)
            for r, gp, gm in zip(radii, sol.norm_plus, sol.norm_minus)]
    out = _outdir(cfg)
    io.write_csv(out / "decay.csv", ["r", "norm_g_plus", "norm_g_minus", "envelope_plus",
                                     "envelope_minus"], rows, artifact_config(cfg), "decay")

    def ch(c):
        return {"exponent": c.exponent, "super_polynomial": c.super_polynomial, "note": c.note}

    ode = fit_decay_exponent(np.c_[radii, sol.norm_plus])[0], fit_decay_exponent(np.c_[radii, sol.norm_minus])[0]
    payload = {
        "field_label": fld.label,
        "kappa_max": cfg.kappa_max,
        "direct_fit": {"plus": ch(direct.plus), "minus": ch(direct.minus)},
        "ode_fit": {"plus": ode[0], "minus": ode[1]},
        "max_truncation_residual": float(np.max(sol.truncation_residual)),
        "max_relative_deviation_ode_vs_direct": float(np.max(np.abs(
            np.hypot(sol.norm_plus, sol.norm_minus) / proj.sphere_norms - 1))),
    }
    io.write_json(out / "decay.json", payload, artifact_config(cfg), "decay")
    return 0, f"exponents plus {direct.plus.exponent}, minus {direct.minus.exponent}"


def cmd_bootstrap(cfg):
    try:
        state = bootstrap_exponents(Fraction(cfg.p), Fraction(cfg.alpha))
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise UsageError(str(exc)) from exc
    rows = [(k, str(e), float(e)) for k, e in enumerate(state.history)]
    io.write_csv(_outdir(cfg) / "bootstrap.csv", ["step", "epsilon", "epsilon_decimal"], rows,
                 artifact_config(cfg), "bootstrap")
    print("step  epsilon  decimal")
    for k, e, d in rows:
        print(f"{k:>4}  {e:>7}  {d:.17g}")
    return 0, f"{state.step} steps"


HANDLERS = {"field": cmd_field, "gauge": cmd_gauge, "quotient": cmd_quotient, "verify": cmd_verify,
            "decay": cmd_decay, "bootstrap": cmd_bootstrap}


def run_command(argv):
    try:
        cfg = resolve_config(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except (UsageError, TypeError) as exc:
        print(f"paulizero: error: {exc}", file=sys.stderr)
        return 2
    try:
        with threadpool_limits(limits=cfg.threads):
            code, msg = HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"paulizero: error: {exc}", file=sys.stderr)
        return 2
    except (HypothesisError, NonConvergentTailError, DegenerateFormError, ConvergenceError) as exc:
        print(f"paulizero: {cfg.command} failed: {exc}", file=sys.stderr)
        return 1
    print(f"paulizero {cfg.command}: {msg}")
    return code


def main(argv=None):
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
