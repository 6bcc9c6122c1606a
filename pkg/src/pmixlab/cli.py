"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 numerical failure (blow-up
guard, infeasible threshold regime), 3 failed verification.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bounds, lab
from .config import ConfigError, load_config
from .mixing import fit_rate, mixing_series
from .plotting import Series, emit_plot
from .solver import Recorder, SimulationError, StabilityError, simulate
from .spectral import EigenTable, weyl_constant

log = logging.getLogger("pmixlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3
SUITES = ("f-iteration", "lemma41", "trivial-bound", "weyl")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="experiment config file")
    p.add_argument("--out", help="output directory (default: the config's out_dir)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted section.key=value override, repeatable")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--seed", type=int, help="seed for random initial data")
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="pmixlab", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("simulate", help="one run per (nu, s): time series")
    _common(p)
    p = sub.add_parser("measure-kappa", help="measured dissipation time per nu")
    _common(p)
    p = sub.add_parser("sweep", help="dissipation time against nu with a log-log fit")
    _common(p)
    p = sub.add_parser("mixing-rate", help="negative Sobolev decay under pure transport")
    _common(p)
    p.add_argument("--samples", type=int, default=41, help="number of sample times")
    p.add_argument("--horizon", type=float, help="time horizon (default: 10 flow periods)")
    p = sub.add_parser("bounds", help="threshold frequencies and rate factors per nu")
    _common(p)
    p.add_argument("--strict", action="store_true",
                   help="exit 2 when some nu admits no threshold frequency")
    p = sub.add_parser("verify", help="run a verification suite")
    _common(p, config_required=False)
    p.add_argument("--suite", required=True, choices=SUITES)
    p = sub.add_parser("plot", help="plot stored run records")
    p.add_argument("inputs", nargs="+", help="run record files (.jsonl)")
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument("--logy", action="store_true")
    p.add_argument("--column", default="l2", choices=("l2", "grad_p", "mix_norm"))
    p.add_argument("--verbose", action="store_true")
    return top


def _config(args):
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"initial.seed={args.seed}")
    return load_config(args.config, overrides)


def _outdir(args, cfg) -> Path:
    out = Path(args.out or cfg.out_dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if v is None:
        return "-"
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _table(rows, cols):
    print("  ".join(f"{c:>12}" for c in cols))
    for r in rows:
        print("  ".join(f"{_fmt(r.get(c)):>12}" for c in cols))


# --- subcommands ------------------------------------------------------------------


def cmd_simulate(args, cfg):
    out = _outdir(args, cfg)
    theta0 = lab.initial_field(cfg)
    series = []
    for nu in cfg.nu_list:
        rec = simulate(cfg.solver(nu), theta0, 0.0, cfg.t_max,
                       Recorder(cfg.cadence_for(nu), cfg.beta),
                       meta={"experiment": cfg.to_dict(), "nu": nu, "s": 0.0})
        lab.persist(rec, lab.record_path(out.parent, cfg.name, nu, 0.0))
        lab.write_csv(rec, out / f"series_nu{nu!r}.csv")
        series.append(Series.of(f"nu={nu:g}", rec.times, rec.l2))
        print(f"nu={nu:g}: t_end={rec.times[-1]:.4g}  ||theta||_2={rec.l2[-1]:.6g}  "
              f"sum residual={sum(rec.energy_residual):.3e}")
    emit_plot(series, out / "l2.svg", title="L2 norm", xlabel="t", ylabel="||theta||_2", logy=True)
    return EXIT_OK


def cmd_measure(args, cfg):
    out = _outdir(args, cfg)
    ms = lab.measure_kappa(cfg, workers=args.workers)
    lab.store_records(out.parent, cfg, ms)
    rows = [{"nu": m.nu, "kappa": m.kappa, "lower_bound": m.lower_bound,
             "trivial": bounds.trivial_kappa_bound(m.nu, cfg.p)} for m in ms]
    _table(rows, ["nu", "kappa", "lower_bound", "trivial"])
    _write_json(out / "kappa.json", [m.to_dict() for m in ms])
    return EXIT_OK


def cmd_sweep(args, cfg):
    out = _outdir(args, cfg)
    sw = lab.nu_sweep(cfg, workers=args.workers)
    lab.store_records(out.parent, cfg, sw.measurements)
    _table(sw.rows, ["nu", "kappa", "reached", "trivial", "rate_factor"])
    if sw.slope is None:
        print("fit: rejected (" + "; ".join(sw.warnings) + ")")
    else:
        print(f"fit: slope {sw.slope:.4f}  95% CI [{sw.ci95[0]:.4f}, {sw.ci95[1]:.4f}]  "
              f"R^2 {sw.r2:.4f}")
    _write_json(out / "sweep.json", sw.to_dict())
    with (out / "sweep.csv").open("w") as fh:
        fh.write("nu,kappa,reached,trivial,rate_factor\n")
        for r in sw.rows:
            fh.write(",".join(_fmt(r[c]) for c in ("nu", "kappa", "reached", "trivial",
                                                   "rate_factor")) + "\n")
    nus = [r["nu"] for r in sw.rows if r["kappa"]]
    emit_plot([Series.of("measured", nus, [r["kappa"] for r in sw.rows if r["kappa"]]),
               Series.of("1/(nu lambda1^(p/2))", nus,
                         [bounds.trivial_kappa_bound(v, cfg.p) for v in nus], dashed=True)],
              out / "sweep.svg", title="dissipation time", xlabel="nu", ylabel="kappa",
              logx=True, logy=True)
    return EXIT_OK


def cmd_mixing(args, cfg):
    out = _outdir(args, cfg)
    horizon = args.horizon or 10 * cfg.period
    times = np.linspace(0.0, horizon, args.samples)
    ser = mixing_series(cfg.velocity(), lab.initial_field(cfg), times, cfg.beta,
                        order=cfg.interp_order)
    report = {"series": ser.to_dict()}
    for law, t, v in (("exponential", ser.times, ser.norms),
                      ("power", ser.times[1:], ser.norms[1:])):
        try:
            fit = fit_rate(t, v, law)
            report[law] = {"rate": fit.rate.to_dict(), "r2": fit.r2}
            print(f"{law:>12}: params {fit.rate.params}  R^2 {fit.r2:.4f}")
        except ValueError as exc:
            report[law] = {"error": str(exc)}
            print(f"{law:>12}: fit rejected ({exc})")
    if ser.unreliable.any():
        print(f"resolution guard: {int(ser.unreliable.sum())} late entries flagged unreliable")
    _write_json(out / "mixing.json", report)
    emit_plot([Series.of(f"H^-{cfg.beta:g} norm", ser.times, ser.norms)], out / "mixing.svg",
              title="mixing series", xlabel="t", ylabel="norm", logy=True)
    return EXIT_OK


def cmd_bounds(args, cfg):
    out = _outdir(args, cfg)
    norm0 = lab.initial_field(cfg).l2()
    rows, failed = [], []
    for nu in cfg.nu_list:
        row = {"nu": nu, "D_p": float(bounds.d_p_constant(cfg.p)),
               "trivial": bounds.trivial_kappa_bound(nu, cfg.p)}
        for case in ("strong", "weak"):
            try:
                rep = bounds.enhanced_rate_factor(cfg.bound_inputs(nu, norm0), case)
            except bounds.InfeasibleRegime as exc:
                # no frequency qualifies: only the trivial bound holds at this nu
                failed.append(str(exc))
                row[f"H_{case}"] = "infeasible"
                row[f"active_{case}"] = False
                continue
            row[f"H_{case}"] = rep.H
            row[f"calH_{case}"] = rep.script_H
            row[f"rate_{case}"] = rep.rate_factor
            row[f"delta_{case}"] = rep.delta
            row[f"active_{case}"] = rep.active
            row[f"effective_{case}"] = rep.effective
        rows.append(row)
    _table(rows, ["nu", "trivial", "H_strong", "calH_strong", "rate_strong", "effective_strong",
                  "H_weak", "rate_weak", "effective_weak", "delta_strong", "delta_weak"])
    _write_json(out / "bounds.json", rows)
    label = "error" if args.strict else "warning"
    for msg in failed:
        print(f"{label}: {msg}; trivial bound only", file=sys.stderr)
    return EXIT_NUMERIC if failed and args.strict else EXIT_OK


def _suite_f_iteration(args):
    rng = np.random.default_rng(args.seed or 0)
    n = 10_000
    p = 2 + rng.uniform(0, 4, n)
    p[p == 2] = 6.0
    b, c, x0 = (rng.uniform(0, 10, n) for _ in range(3))
    b, c, x0 = (np.where(v == 0, 10.0, v) for v in (b, c, x0))
    t = np.sort(rng.uniform(0, 10, (n, 3)), axis=1)
    t0, t1, t2 = t.T
    nested = bounds.F_apply(c * (t2 - t1), p, bounds.F_apply(b * (t1 - t0), p, x0))
    closed = bounds.F_compose(b, c, t0, t1, t2, p, x0)
    dom = bounds.F_compose_min(b, c, t0, t1, t2, p, x0)
    err = np.abs(nested - closed) / np.maximum(1.0, np.abs(closed))
    ok_id = bool(err.max() <= 1e-12)
    ok_dom = bool(np.all(closed <= dom * (1 + 1e-12)))
    xs = np.linspace(0, 10, 2001)
    ok_mono = all(np.all(np.diff(bounds.F_apply(a, q, xs)) > 0)
                  for a in (1e-3, 0.5, 1.0, 10.0) for q in (2.5, 3.0, 4.0, 6.0))
    for name, ok, extra in (("composition identity", ok_id, f"max rel err {err.max():.2e}"),
                            ("min{b,c} domination", ok_dom, ""),
                            ("monotone in x", ok_mono, "")):
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {extra}".rstrip())
    return ok_id and ok_dom and ok_mono


def _suite_lemma41(args, cfg):
    rep = lab.verify_lemma41(cfg)
    worst = max(d / b for d, b in zip(rep.distance_sq, rep.bound))
    print(f"{'PASS' if rep.passed else 'FAIL'}  distance <= bound  (worst ratio {worst:.3e})")
    print(f"{'PASS' if rep.growth_passed else 'FAIL'}  gradient growth <= bound")
    print(f"{'PASS' if rep.control_failed else 'FAIL'}  negative control (D_p -> 1) violated")
    return rep.passed and rep.growth_passed


def _suite_trivial(args, cfg):
    ok = True
    for m in lab.measure_kappa(cfg, workers=args.workers):
        bound = bounds.trivial_kappa_bound(m.nu, cfg.p)
        good = m.kappa is not None and not m.lower_bound and m.kappa <= 1.05 * bound
        ok &= good
        print(f"{'PASS' if good else 'FAIL'}  nu={m.nu:g}  kappa={_fmt(m.kappa)}  "
              f"1.05*trivial={1.05 * bound:.6g}")
    return ok


def _suite_weyl(args, cfg):
    d = cfg.d if cfg else 2
    table = EigenTable.for_ball(d, 64 if d == 2 else 4096)
    c = weyl_constant(d)
    counts = table.counting()
    lam = table.values
    ok_idx = np.nonzero(counts > c * lam ** (d / 2))[0]
    beyond = ok_idx[ok_idx >= 100]
    ok = beyond.size == 0
    last = int(beyond.max()) + 1 if beyond.size else None
    print(f"{'PASS' if ok else 'FAIL'}  N(lambda) <= c lambda^(d/2) beyond the 100th eigenvalue "
          f"(d={d}" + (f", last violation at distinct eigenvalue #{last})" if last else ")"))
    return ok


def cmd_verify(args):
    cfg = _config(args) if args.config else None
    if args.suite in ("lemma41", "trivial-bound") and cfg is None:
        raise ConfigError(f"suite {args.suite!r} needs --config")
    if args.suite == "f-iteration":
        ok = _suite_f_iteration(args)
    elif args.suite == "lemma41":
        ok = _suite_lemma41(args, cfg)
    elif args.suite == "trivial-bound":
        ok = _suite_trivial(args, cfg)
    else:
        ok = _suite_weyl(args, cfg)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_plot(args):
    series = []
    for path in args.inputs:
        rec = lab.load(path)
        label = f"nu={rec.config.get('nu', '?')} s={rec.config.get('s', '?')}"
        series.append(Series.of(label, rec.times, getattr(rec, args.column)))
    svg = emit_plot(series, args.out, xlabel="t", ylabel=args.column, logy=args.logy)
    print(f"wrote {svg} and {svg.with_suffix('.csv')}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "measure-kappa": cmd_measure, "sweep": cmd_sweep,
            "mixing-rate": cmd_mixing, "bounds": cmd_bounds}


def parse_and_dispatch(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "plot":
            return cmd_plot(args)
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, StabilityError, bounds.InfeasibleRegime) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (lab.PartialReadError, lab.SchemaVersionError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main():
    sys.exit(parse_and_dispatch())
