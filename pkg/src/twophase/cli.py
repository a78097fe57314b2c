"""Command-line driver.

Subcommands: run, verify, convergence, check-eos, resume. Exit codes: 0 on
success, 1 on validated-input failure (configuration, file format, locking),
2 on numerical failure (positivity loss, non-finite values, failed checks).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import diagnostics, dynamics, verification
from .config import SimConfig, parse_config
from .errors import (
    ConfigError,
    DegeneracyError,
    DomainError,
    NonFiniteError,
    OutputLockError,
    PositivityLoss,
    QuadratureError,
    SnapshotFormatError,
)
from .storage import DirectorySinks, format_float, read_snapshot, write_snapshot

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twophase",
        description="Viscous liquid-gas two-phase flow simulator and diagnostics",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress summary output")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate a configured problem")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out-dir", default=None)

    p_verify = sub.add_parser("verify", help="identity-residual suite on a snapshot")
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--snapshot", required=True)
    p_verify.add_argument("--tol", type=float, default=None,
                          help="fail (exit 2) if any residual exceeds this")

    p_conv = sub.add_parser("convergence", help="manufactured-solution order study")
    p_conv.add_argument("--config", required=True)
    p_conv.add_argument("--out-dir", required=True)
    p_conv.add_argument("--study", choices=("spatial", "temporal"), default="spatial")
    p_conv.add_argument("--resolutions", default="32,64,128",
                        help="comma-separated points per axis (spatial study)")
    p_conv.add_argument("--dts", default="0.02,0.01,0.005",
                        help="comma-separated step sizes (temporal study)")
    p_conv.add_argument("--t-end", type=float, default=0.1)

    p_eos = sub.add_parser("check-eos", help="pressure-law property sweep")
    p_eos.add_argument("--config", required=True)

    p_resume = sub.add_parser("resume", help="continue a run from a snapshot")
    p_resume.add_argument("--config", required=True)
    p_resume.add_argument("--snapshot", required=True)
    p_resume.add_argument("--out-dir", default=None)
    return parser


def _load_config(path: str) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _say(quiet: bool, msg: str):
    if not quiet:
        print(msg)


def _do_run(cfg: SimConfig, out_dir: str, quiet: bool,
            initial=None) -> int:
    sinks = DirectorySinks(out_dir)
    try:
        try:
            summary = dynamics.run(cfg, sinks, initial=initial)
        except (PositivityLoss, NonFiniteError) as err:
            print(f"numerical failure: {err}", file=sys.stderr)
            return EXIT_NUMERICAL
        write_snapshot(summary.final_state, os.path.join(out_dir, "final.tpfs"))
        _say(quiet, f"integrated to t={summary.final_state.t:.6g} in "
                    f"{summary.steps} steps, {summary.records_emitted} records")
        drift = ", ".join(format_float(d) for d in summary.momentum_drift)
        _say(quiet, f"momentum drift per component: {drift}")
        _say(quiet, "boundary-shell perturbation at start: "
                    f"{summary.boundary_shell_perturbation:.3e}")
        rec = sinks.last_record
        if rec is not None:
            _say(quiet, f"smallness report: E0-anchored rhs(2*E0^theta)="
                        f"{format_float(rec.smallness_rhs)}, "
                        f"A1+A2={format_float(rec.smallness_lhs)}")
        return EXIT_OK
    finally:
        sinks.close()


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    out_dir = args.out_dir or cfg.output.dir
    if out_dir is None:
        raise ConfigError(["no output directory: set output.dir or pass --out-dir"])
    return _do_run(cfg, out_dir, args.quiet)


def _cmd_resume(args) -> int:
    cfg = _load_config(args.config)
    out_dir = args.out_dir or cfg.output.dir
    if out_dir is None:
        raise ConfigError(["no output directory: set output.dir or pass --out-dir"])
    state = read_snapshot(args.snapshot)
    return _do_run(cfg, out_dir, args.quiet, initial=state)


def _cmd_verify(args) -> int:
    cfg = _load_config(args.config)
    state = read_snapshot(args.snapshot)
    scheme, params, visc = cfg.scheme, cfg.eos, cfg.visc
    rhs_out = dynamics.rhs(state, params, visc, scheme,
                           positivity_floor=cfg.integrator.positivity_floor)
    u_dot = diagnostics.material_derivative_u(state, rhs_out, scheme)

    # construction identity of the velocity-form momentum balance
    from .fields import VectorField, grad, linf_norm, _laplacian_raw, _deriv_axis, div
    g = state.grid
    grad_p = grad(dynamics.pressure_field(state, params), scheme)
    visc_term = visc.mu * _laplacian_raw(g, state.u.values, scheme)
    div_u = div(state.u, scheme)
    for a in range(g.dim):
        visc_term[a] += (visc.lam + visc.mu) * _deriv_axis(g, div_u.values, a, scheme)
    construction = linf_norm(VectorField(
        g, state.m.values * u_dot.values - (visc_term - grad_p.values)
    )) / (1.0 + linf_norm(grad_p))

    residuals = {
        "res_F": diagnostics.check_elliptic_f(state, params, visc, scheme, rhs_out),
        "res_hoff": diagnostics.hoff_decomposition(state, params, visc, scheme, rhs_out)[1],
        "res_laplacian_decomp": diagnostics.check_laplacian_decomposition(
            state, params, visc, scheme),
        "construction_identity": construction,
    }
    if g.dim == 3:
        residuals["res_omega"] = diagnostics.check_elliptic_omega(
            state, params, visc, scheme, rhs_out)

    worst = 0.0
    for name, value in sorted(residuals.items()):
        print(f"{name} = {format_float(value)}")
        worst = max(worst, value)
    if args.tol is not None and worst > args.tol:
        print(f"verification failed: worst residual {worst:.3e} > tol {args.tol:.3e}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _default_mms_case(cfg: SimConfig) -> verification.MmsCase:
    dim = cfg.grid.dim
    kvec = (1,) * dim
    kvec2 = (2,) + (1,) * (dim - 1)
    u_modes = tuple(
        verification.sin_mode(0.05, kvec, omega=3.0, phase=0.2 + 0.4 * c)
        for c in range(dim)
    )
    return verification.MmsCase(
        dim=dim,
        base_m=cfg.eos.m_tilde,
        base_n=cfg.eos.n_tilde,
        m_mode=verification.CosMode(0.04, kvec, omega=2.0, phase=0.3),
        n_mode=verification.CosMode(0.03, kvec2, omega=1.5, phase=1.1),
        u_modes=u_modes,
    )


def write_convergence_csv(report: verification.ConvergenceReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("kind,parameter,field,l2_error,linf_error,order_l2,order_linf\n")
        for name in ("m", "n", "u"):
            for i, param in enumerate(report.parameter):
                fh.write(",".join((
                    report.kind,
                    format_float(param),
                    name,
                    format_float(report.l2_errors[name][i]),
                    format_float(report.linf_errors[name][i]),
                    format_float(report.orders_l2[name]),
                    format_float(report.orders_linf[name]),
                )) + "\n")


def _cmd_convergence(args) -> int:
    cfg = _load_config(args.config)
    case = _default_mms_case(cfg)
    if args.study == "spatial":
        resolutions = tuple(int(s) for s in args.resolutions.split(","))
        visc_scale = cfg.eos.m_tilde / (2.0 * cfg.grid.dim
                                        * (2.0 * cfg.visc.mu + cfg.visc.lam))
        report = verification.convergence_study(
            case, cfg.eos, cfg.visc, cfg.scheme,
            length=cfg.grid.length, t_end=args.t_end,
            method=cfg.integrator.method,
            resolutions=resolutions,
            dt_for_h=lambda h: 0.3 * h * h * visc_scale,
            expected_order=2.0 if cfg.scheme.kind == "central2" else 4.0,
            slack=0.3,
        )
    else:
        dts = tuple(float(s) for s in args.dts.split(","))
        report = verification.convergence_study(
            case, cfg.eos, cfg.visc, cfg.scheme,
            length=cfg.grid.length, t_end=args.t_end,
            method=cfg.integrator.method,
            fixed_n=cfg.grid.n, dts=dts,
            expected_order=4.0 if cfg.integrator.method == "rk4" else 3.0,
            slack=0.3,
        )
    os.makedirs(args.out_dir, exist_ok=True)
    out_csv = os.path.join(args.out_dir, "convergence.csv")
    write_convergence_csv(report, out_csv)
    orders = " ".join(f"{k}={report.orders_l2[k]:.3f}" for k in ("m", "n", "u"))
    _say(args.quiet, f"{report.kind} study fitted L2 orders: {orders} "
                     f"(expected {report.expected_order} - {report.slack})")
    _say(args.quiet, f"report written to {out_csv}")
    if not report.passed:
        print("convergence study failed its order/monotonicity gate", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_check_eos(args) -> int:
    cfg = _load_config(args.config)
    report = verification.eos_property_sweep(cfg.eos)
    _say(args.quiet, f"sweep grid {report.grid_size[0]}x{report.grid_size[1]}: "
                     f"max FD mismatch {report.fd_max_rel_error:.3e}, "
                     f"blow-up slope {report.blowup_slope:.4f}")
    if not report.passed:
        for v in report.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_NUMERICAL
    _say(args.quiet, "all pressure-law properties hold")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "verify": _cmd_verify,
    "convergence": _cmd_convergence,
    "check-eos": _cmd_check_eos,
    "resume": _cmd_resume,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, SnapshotFormatError, OutputLockError, DomainError,
            FileNotFoundError) as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (PositivityLoss, NonFiniteError, QuadratureError, DegeneracyError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
