"""Command line front end.

    reflide [--config PATH] [--force] [--threads N] [--out DIR] COMMAND

Commands: check, solve, verify, ergodic, reproduce-paper.  Exit codes are
0 success, 1 condition or invariant failure, 2 non-convergence, 3 I/O or
parse error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.fft

from .expr import ExpressionError, ExpressionSyntaxError, parse
from .funcspace import GridFunction
from .measure import MeasureError, check_hypotheses, ergodic_mean
from .operator import ProblemSpec, ProblemSpecError
from .quadrature import QuadratureConfig, QuadratureError, p1_p2_sup
from .solver import THM1, THM2, ContractionError, ContractionReport, check_thm1, check_thm2, estimate_lipschitz, picard_solve
from .verify import VerificationError, manufacture, paa_diagnostics, residual

log = logging.getLogger("reflide")

EXIT_OK, EXIT_CONDITION, EXIT_NONCONVERGED, EXIT_IO = 0, 1, 2, 3

REFERENCE_TARGET_LHS = (math.sqrt(2.0) + 1.0) / 9.0
REFERENCE_TARGET_RHS = 1.0 / (math.sqrt(2.0) + 2.0)


class ConfigError(ValueError):
    """Missing keys, malformed values, unreadable files."""


# --- configuration ---------------------------------------------------------

REQUIRED = {"problem": ("a", "b", "f")}

KNOWN = {
    "problem": {"a", "b", "f", "h", "K", "beta", "rho", "p", "kernel_decay", "allow_no_reflection"},
    "grid": {"T", "h"},
    "quad": {"abs_tol", "max_refinements", "initial_panels"},
    "picard": {"tol", "max_iter", "x0"},
    "check": {
        "theorem", "p", "lf", "lh", "lf_decay", "lh_decay", "lf_const", "lh_const",
        "lipschitz_box", "lipschitz_samples", "z_grid", "radii", "hypothesis_radii",
        "phi", "residual_window", "residual_tol", "mms_eps", "mms_tol",
    },
    "output": {"csv_path", "report_path", "residual_path"},
}


def _number(section: str, key: str, text: str) -> float:
    try:
        e = parse(text)
        if e.free_vars:
            raise ConfigError(f"[{section}] {key}: constant expected, found variable(s) {', '.join(e.free_vars)}")
        return float(e.evaluate({}))
    except ExpressionError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _numbers(section: str, key: str, text: str) -> list[float]:
    items = [s for s in text.replace(",", " ").split() if s]
    if len(items) == 1 and ":" in items[0]:
        lo, step, hi = (_number(section, key, s) for s in items[0].split(":"))
        count = int(round((hi - lo) / step)) + 1
        return [lo + k * step for k in range(count)]
    return [_number(section, key, s) for s in items]


@dataclass
class RunConfig:
    problem: dict
    half_width: float = 40.0
    step: float = 0.02
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    picard_tol: float = 1e-8
    max_iter: int = 200
    x0: str = "0"
    check: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    source: str = ""
    ps: ProblemSpec | None = None

    def check_number(self, key: str, default=None):
        return _number("check", key, self.check[key]) if key in self.check else default

    def check_numbers(self, key: str, default=None):
        return _numbers("check", key, self.check[key]) if key in self.check else default


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def load_config_text(text: str, source: str = "<string>") -> RunConfig:
    cp = _parser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    missing = [f"[{s}] {k}" for s, keys in REQUIRED.items() for k in keys if not cp.has_option(s, k)]
    if missing:
        raise ConfigError(f"{source}: missing required key(s): {', '.join(missing)}")
    unknown = [s for s in cp.sections() if s not in KNOWN]
    unknown += [f"[{s}] {k}" for s in cp.sections() if s in KNOWN for k in cp[s] if k not in KNOWN[s]]
    if unknown:
        raise ConfigError(f"{source}: unknown section/key(s): {', '.join(unknown)}")

    sec = lambda name: dict(cp[name]) if cp.has_section(name) else {}
    prob, grid, quad, pic = sec("problem"), sec("grid"), sec("quad"), sec("picard")

    qkw = {}
    if "abs_tol" in quad:
        qkw["abs_tol"] = _number("quad", "abs_tol", quad["abs_tol"])
    for key in ("max_refinements", "initial_panels"):
        if key in quad:
            qkw[key] = int(_number("quad", key, quad[key]))
    try:
        qcfg = QuadratureConfig(**qkw)
    except ValueError as exc:
        raise ConfigError(f"[quad] {exc}") from None

    cfg = RunConfig(
        problem=prob,
        half_width=_number("grid", "T", grid["T"]) if "T" in grid else 40.0,
        step=_number("grid", "h", grid["h"]) if "h" in grid else 0.02,
        quad=qcfg,
        picard_tol=_number("picard", "tol", pic["tol"]) if "tol" in pic else 1e-8,
        max_iter=int(_number("picard", "max_iter", pic["max_iter"])) if "max_iter" in pic else 200,
        x0=pic.get("x0", "0"),
        check=sec("check"),
        output=sec("output"),
        source=source,
    )
    try:
        e = parse(cfg.x0)
    except ExpressionError as exc:
        raise ConfigError(f"[picard] x0: {exc}") from None
    if any(v != "t" for v in e.free_vars):
        raise ConfigError("[picard] x0: only t is allowed")
    for key in ("lf", "lh", "phi"):
        if key in cfg.check:
            try:
                e = parse(cfg.check[key])
            except ExpressionError as exc:
                raise ConfigError(f"[check] {key}: {exc}") from None
            if any(v not in ("t", "p") for v in e.free_vars):
                raise ConfigError(f"[check] {key}: only t and p are allowed")
    cfg.ps = build_problem(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return load_config_text(text, str(path))


def build_problem(cfg: RunConfig) -> ProblemSpec:
    prob = cfg.problem
    exprs = {}
    for key, default in (("f", "0"), ("h", "0"), ("K", "0"), ("beta", "t"), ("rho", "1")):
        text = prob.get(key, default)
        try:
            parse(text)
        except ExpressionError as exc:
            raise ConfigError(f"[problem] {key}: {exc}") from None
        exprs[key] = text
    decay = _number("problem", "kernel_decay", prob["kernel_decay"]) if "kernel_decay" in prob else None
    allow = prob.get("allow_no_reflection", "false").strip().lower() in ("1", "true", "yes")
    span = max(100.0, 2.0 * cfg.half_width + 20.0)
    return ProblemSpec.from_sources(
        _number("problem", "a", prob["a"]),
        _number("problem", "b", prob["b"]),
        p_delay=_number("problem", "p", prob["p"]) if "p" in prob else 0.0,
        kernel_decay=decay,
        allow_no_reflection=allow,
        beta_check_span=span,
        **exprs,
    )


def shipped_config(name: str = "decaying_profile.cfg") -> Path:
    return Path(str(resources.files("reflide") / "data" / name))


# --- reports ---------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


class Report:
    """Ordered key=value lines; insertion order is the output order."""

    def __init__(self):
        self.items: dict[str, str] = {}

    def __setitem__(self, key, value):
        self.items[key] = _fmt(value)

    def __getitem__(self, key):
        return self.items[key]

    def text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.items.items())


def _contraction_items(rep: Report, cr: ContractionReport, prefix: str) -> None:
    if cr.theorem == THM1:
        rep[f"{prefix}.c"] = cr.c
        rep[f"{prefix}.lf"] = cr.lf
        rep[f"{prefix}.lh"] = cr.lh
    else:
        rep[f"{prefix}.p"] = cr.p
        rep[f"{prefix}.q"] = cr.q
        rep[f"{prefix}.k_qnorm"] = cr.k_qnorm
        rep[f"{prefix}.lf_norm"] = cr.lf
        rep[f"{prefix}.lh_norm"] = cr.lh
        rep[f"{prefix}.lf_mu_norm"] = cr.lf_mu_norm
    rep[f"{prefix}.lhs"] = cr.lhs
    rep[f"{prefix}.rhs"] = cr.rhs
    rep[f"{prefix}.factor"] = cr.factor
    rep[f"{prefix}.verdict"] = cr.summary


def _lipschitz_box(cfg: RunConfig) -> dict:
    r = cfg.check_number("lipschitz_box", 10.0)
    T = cfg.half_width
    return {"t": (-T, T), "x1": (-r, r), "x2": (-r, r)}


def contraction_reports(cfg: RunConfig) -> tuple[dict, str]:
    """Both theorems where the configuration allows, and the selected one."""
    ps, q = cfg.ps, cfg.quad
    out = {}
    if "lf" in cfg.check and "lh" in cfg.check:
        out[THM2] = check_thm2(
            ps,
            parse(cfg.check["lf"]),
            parse(cfg.check["lh"]),
            cfg.check_number("p", 2.0),
            q,
            lf_decay=cfg.check_number("lf_decay", 1.0),
            lh_decay=cfg.check_number("lh_decay", 1.0),
        )
    lf = cfg.check_number("lf_const")
    lh = cfg.check_number("lh_const")
    n = int(cfg.check_number("lipschitz_samples", 4000))
    if lf is None:
        lf = estimate_lipschitz(ps.f, _lipschitz_box(cfg), n)
    if lh is None:
        lh = 0.0 if ps.h_is_zero else estimate_lipschitz(ps.h, _lipschitz_box(cfg), n)
    out[THM1] = check_thm1(ps, lf, lh, q)
    wanted = cfg.check.get("theorem", "auto").strip()
    aliases = {"thm1": THM1, "thm2": THM2, THM1: THM1, THM2: THM2}
    if wanted == "auto":
        selected = THM2 if THM2 in out else THM1
    elif wanted in aliases:
        selected = aliases[wanted]
        if selected not in out:
            raise ConfigError("[check] theorem = thm2 needs lf and lh profiles")
    else:
        raise ConfigError(f"[check] theorem: expected thm1, thm2 or auto, got {wanted!r}")
    return out, selected


def run_check(cfg: RunConfig, rep: Report) -> ContractionReport:
    ps = cfg.ps
    start = time.perf_counter()
    reports, selected = contraction_reports(cfg)
    rep["problem.a"] = ps.a
    rep["problem.b"] = ps.b
    for key in ("f", "h", "K", "beta", "rho"):
        rep[f"problem.{key}"] = ps.sources[key]
    rep["problem.p"] = ps.p_delay
    rep["lambda"] = ps.lam
    rep["geom"] = ps.geom
    for name in (THM1, THM2):
        if name in reports:
            _contraction_items(rep, reports[name], "thm1" if name == THM1 else "thm2")
    chosen = reports[selected]
    rep["selected.theorem"] = selected
    rep["selected.factor"] = chosen.factor
    rep["selected.verdict"] = chosen.summary
    log.info("contraction check took %.3f s", time.perf_counter() - start)

    hyp = check_hypotheses(
        ps.mu, ps.beta, ps.p_delay, cfg.quad, radii=cfg.check_numbers("hypothesis_radii", (5.0, 10.0, 20.0, 40.0))
    )
    rep["m1.ratio"] = hyp.m1_ratio
    rep["m1.verdict"] = hyp.m1_verdict
    if hyp.m2_pair is not None:
        rep["m2.m"], rep["m2.n"] = hyp.m2_pair
    rep["m2.verdict"] = hyp.m2_verdict
    rep["probe.windows"] = hyp.windows
    rep["probe.shifts"] = hyp.shifts
    rep["h0.lambda_bound"] = hyp.h0_lambda_bound
    rep["h0.translation"] = hyp.h0_translation
    rep["h0.limsup_radii"] = hyp.h0_limsup_radii
    rep["h0.limsup_estimate"] = hyp.h0_limsup_estimate
    rep["h0.verdict"] = hyp.h0_verdict
    w = p1_p2_sup(ps.mu, ps.lam, cfg.check_numbers("z_grid", [0.5 * k for k in range(81)]), cfg.quad)
    rep["h1.p1"] = w.p1
    rep["h1.p2"] = w.p2
    rep["h1.saturated"] = w.saturated
    rep["kernel.zero"] = not ps.has_kernel_terms
    for k, note in enumerate(ps.notes):
        rep[f"note.{k}"] = note
    return chosen


def _out_path(cfg: RunConfig, out_dir: Path, key: str, default: str) -> Path:
    p = Path(cfg.output.get(key, default))
    return p if p.is_absolute() else out_dir / p


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _finish(cfg: RunConfig, args, rep: Report, code: int) -> int:
    rep["exit_code"] = code
    text = rep.text()
    _write(_out_path(cfg, args.out, "report_path", "report.txt"), text)
    sys.stdout.write(text)
    return code


def _initial(cfg: RunConfig) -> GridFunction:
    fn = parse(cfg.x0).bind("t")
    return GridFunction.from_callable(fn, cfg.half_width, cfg.step)


def _window(cfg: RunConfig) -> tuple[float, float]:
    w = cfg.check_numbers("residual_window", [-10.0, 10.0])
    if len(w) != 2:
        raise ConfigError("[check] residual_window needs two numbers")
    return w[0], w[1]


def _solve(cfg: RunConfig, args, rep: Report, contraction: ContractionReport):
    trace = picard_solve(
        cfg.ps,
        _initial(cfg),
        cfg.picard_tol,
        cfg.max_iter,
        cfg.quad,
        contraction=contraction,
        force=args.force,
        residual_window=_window(cfg),
    )
    rep["solve.converged"] = trace.converged
    rep["solve.iterations"] = len(trace.iterations)
    rep["solve.last_step"] = trace.iterations[-1] if trace.iterations else 0.0
    ratios = trace.ratios[1:]
    rep["solve.max_ratio_after_2"] = max(ratios) if ratios else 0.0
    rep["solve.lattice_level"] = trace.lattice_level
    rep["solve.residual_sup"] = trace.final_residual if trace.final_residual is not None else "nan"
    rep["solve.steps"] = [f"{d:.6e}" for d in trace.iterations]
    csv_path = _out_path(cfg, args.out, "csv_path", "solution.csv")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    trace.solution.to_csv(csv_path)
    rep["solve.csv"] = csv_path
    return trace


# --- commands --------------------------------------------------------------


def cmd_check(cfg: RunConfig, args) -> int:
    rep = Report()
    rep["command"] = "check"
    chosen = run_check(cfg, rep)
    return _finish(cfg, args, rep, EXIT_OK if chosen.verdict else EXIT_CONDITION)


def cmd_solve(cfg: RunConfig, args) -> int:
    rep = Report()
    rep["command"] = "solve"
    chosen = run_check(cfg, rep)
    if not chosen.verdict and not args.force:
        return _finish(cfg, args, rep, EXIT_CONDITION)
    trace = _solve(cfg, args, rep, chosen)
    return _finish(cfg, args, rep, EXIT_OK if trace.converged else EXIT_NONCONVERGED)


def cmd_verify(cfg: RunConfig, args) -> int:
    rep = Report()
    rep["command"] = "verify"
    window = _window(cfg)
    if args.residual:
        try:
            u = GridFunction.from_csv(args.residual)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read solution {args.residual}: {exc}") from None
        rr = residual(cfg.ps, u, window, cfg.quad)
        tol = cfg.check_number("residual_tol", 1e-4)
        path = _out_path(cfg, args.out, "residual_path", "residual.csv")
        path.parent.mkdir(parents=True, exist_ok=True)
        rr.to_csv(path)
        rep["verify.mode"] = "residual"
        rep["verify.window"] = rr.window
        rep["verify.sup_residual"] = rr.sup_residual
        rep["verify.l2_residual"] = rr.l2_residual
        rep["verify.tolerance"] = tol
        rep["verify.residual_csv"] = path
        return _finish(cfg, args, rep, EXIT_OK if rr.sup_residual < tol else EXIT_CONDITION)

    u_star = parse(args.mms)
    eps = cfg.check_number("mms_eps", 0.05)
    tol = cfg.check_number("mms_tol", 1e-4)
    ps = manufacture(u_star, cfg.ps, eps, cfg.half_width, cfg.step, cfg.quad)
    target = ps.f.grid_u
    pre = residual(ps, target, window, cfg.quad).sup_residual
    trace = picard_solve(
        ps, _initial(cfg), cfg.picard_tol, cfg.max_iter, cfg.quad,
        contraction=ps.f.contraction, residual_window=window,
    )
    inside = (target.grid >= window[0]) & (target.grid <= window[1])
    err = float(np.max(np.abs(trace.solution.samples - target.samples)[inside]))
    rep["verify.mode"] = "manufactured"
    rep["verify.u_star"] = str(u_star)
    rep["verify.eps"] = eps
    rep["verify.contraction_constant"] = ps.f.contraction.lhs
    rep["verify.residual_at_u_star"] = pre
    rep["verify.converged"] = trace.converged
    rep["verify.iterations"] = len(trace.iterations)
    rep["verify.sup_error"] = err
    rep["verify.tolerance"] = tol
    if not trace.converged:
        return _finish(cfg, args, rep, EXIT_NONCONVERGED)
    ok = pre < 1e-6 and err < tol
    return _finish(cfg, args, rep, EXIT_OK if ok else EXIT_CONDITION)


def cmd_ergodic(cfg: RunConfig, args) -> int:
    rep = Report()
    rep["command"] = "ergodic"
    mu = cfg.ps.mu
    phi_text = args.phi or cfg.check.get("phi")
    if phi_text:
        radii = cfg.check_numbers("radii", [5.0, 10.0, 20.0, 40.0, 80.0])
        er = ergodic_mean(parse(phi_text), mu, radii, cfg.quad)
        rep["ergodic.phi"] = phi_text
    else:
        path = Path(args.solution) if args.solution else _out_path(cfg, args.out, "csv_path", "solution.csv")
        try:
            u = GridFunction.from_csv(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"no phi configured and cannot read solution {path}: {exc}") from None
        er = paa_diagnostics(u, mu, cfg.check_numbers("radii"), cfg.quad)
        rep["ergodic.phi"] = f"remainder of {path}"
    rep["ergodic.measure"] = mu.description
    rep["ergodic.radii"] = er.radii
    rep["ergodic.means"] = er.means
    rep["ergodic.trend_slope"] = er.trend_slope
    rep["ergodic.verdict"] = er.verdict
    if er.note:
        rep["ergodic.note"] = er.note
    return _finish(cfg, args, rep, EXIT_OK)


def cmd_reproduce_paper(cfg: RunConfig, args) -> int:
    rep = Report()
    rep["command"] = "reproduce-paper"
    rep["config"] = cfg.source
    chosen = run_check(cfg, rep)
    lhs_ok = abs(chosen.lhs - REFERENCE_TARGET_LHS) < 1e-6
    rhs_ok = abs(chosen.rhs - REFERENCE_TARGET_RHS) < 1e-6
    rep["target.lhs"] = REFERENCE_TARGET_LHS
    rep["target.rhs"] = REFERENCE_TARGET_RHS
    rep["target.lhs_match"] = lhs_ok
    rep["target.rhs_match"] = rhs_ok
    if not (lhs_ok and rhs_ok and chosen.verdict):
        return _finish(cfg, args, rep, EXIT_CONDITION)
    trace = _solve(cfg, args, rep, chosen)
    if not trace.converged:
        return _finish(cfg, args, rep, EXIT_NONCONVERGED)
    default_tol = 1e-4 if cfg.step <= 0.02 + 1e-12 else 1e-3
    tol = cfg.check_number("residual_tol", default_tol)
    rep["target.residual_tol"] = tol
    rep["target.residual_ok"] = trace.final_residual < tol
    er = paa_diagnostics(trace.solution, cfg.ps.mu, cfg.check_numbers("radii"), cfg.quad)
    rep["paa.radii"] = er.radii
    rep["paa.means"] = er.means
    rep["paa.verdict"] = er.verdict
    rep["paa.note"] = er.note
    return _finish(cfg, args, rep, EXIT_OK if trace.final_residual < tol else EXIT_CONDITION)


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "ergodic": cmd_ergodic,
    "reproduce-paper": cmd_reproduce_paper,
}


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", type=Path, default=d(None), help="run configuration (key=value sections)")
    parser.add_argument("--force", action="store_true", default=d(False), help="solve even if the contraction check fails")
    parser.add_argument("--threads", type=int, default=d(1), help="FFT worker threads")
    parser.add_argument("--out", type=Path, default=d(Path(".")), help="directory for reports and CSV files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reflide", description=__doc__.split("\n\n")[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        _global_flags(sp, suppress=True)
        if name == "verify":
            mode = sp.add_mutually_exclusive_group(required=True)
            mode.add_argument("--mms", metavar="U_STAR", help="manufactured-solution round trip for u*(t)")
            mode.add_argument("--residual", metavar="CSV", help="equation residual of a solution CSV")
        if name == "ergodic":
            sp.add_argument("--phi", help="expression in t (default: remainder of the solution CSV)")
            sp.add_argument("--solution", help="solution CSV (default: [output] csv_path)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_IO
    try:
        path = args.config
        if path is None:
            if args.command != "reproduce-paper":
                raise ConfigError("--config is required for this command")
            path = shipped_config()
        cfg = load_config(path)
        with scipy.fft.set_workers(args.threads):
            return COMMANDS[args.command](cfg, args)
    except (ConfigError, ExpressionSyntaxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (
        ProblemSpecError, MeasureError, ContractionError, VerificationError, QuadratureError, ExpressionError
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONDITION


if __name__ == "__main__":
    sys.exit(main())
