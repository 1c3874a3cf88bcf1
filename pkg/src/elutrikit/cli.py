"""Batch command-line front end.

Subcommands: simulate, kernels, deconvolve, combine, noise-study,
runtime-sweep.  Every command is a pure function of (config, flags, seed)
to bytes on disk: CSV files carry 17 significant digits and JSON output is
key-sorted, so repeated runs are byte-identical.

Exit codes: 0 success, 2 config validation failure, 3 numerical or solver
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import feed as feed_mod
from . import forward, inverse, physics, qp
from .config import ConfigError, ExperimentConfig, load_config


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell if isinstance(cell, str) else _fmt(cell)
                              for cell in row))
    path.write_text("\n".join(lines) + "\n", newline="\n")


def _write_run_json(path: Path, command: str, configs: dict, results: dict,
                    seed=None) -> None:
    doc = {
        "tool": "elutrikit",
        "version": __version__,
        "command": command,
        "config": configs,
        "seed": seed,
        "results": results,
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", newline="\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _bag_rows(bags: forward.BagMasses):
    for i in range(bags.schedule.n_bags):
        t0, t1 = bags.schedule.interval(i)
        yield (str(i + 1), t0, t1, float(bags.masses[i]))


def _read_masses_csv(path: Path) -> forward.BagMasses:
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or lines[0].split(",")[:4] != ["bag_index", "t_start_s", "t_end_s", "mass_kg"]:
        raise ConfigError("<masses>", f"{path} is not a bag-mass CSV")
    starts, ends, masses = [], [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        starts.append(float(cells[1]))
        ends.append(float(cells[2]))
        masses.append(float(cells[3]))
    for s, e_prev in zip(starts[1:], ends[:-1]):
        if abs(s - e_prev) > 1e-9 * max(abs(e_prev), 1.0):
            raise ConfigError("<masses>", "bag intervals are not contiguous")
    times = np.array(starts + [ends[-1]])
    return forward.BagMasses(forward.BagSchedule(times), np.array(masses),
                             provenance="file")


def _reconstruction_rows(recon: inverse.Reconstruction):
    grid = recon.spline.grid
    k = grid.knots
    for j, coeff in enumerate(recon.spline.coefficients):
        if grid.order == 0:
            lo, hi = k[j], k[j + 1]
        else:
            lo, hi = k[max(j - 1, 0)], k[j + 1]
        yield (float(lo), float(hi), float(coeff))


def _write_reconstruction(out: Path, recon: inverse.Reconstruction) -> None:
    _write_csv(out / "reconstruction.csv",
               ["knot_low_m", "knot_high_m", "coefficient"],
               _reconstruction_rows(recon))


def _laminar_check(cfg: ExperimentConfig, t_end: float) -> float:
    re_end = physics.channel_reynolds(cfg.ramp, t_end, cfg.fluid, cfg.geom)
    if re_end >= physics.LAMINAR_REYNOLDS_LIMIT:
        print(f"warning: channel Reynolds number {re_end:.0f} at the final bag "
              f"time exceeds the laminar limit {physics.LAMINAR_REYNOLDS_LIMIT:.0f}")
    return re_end


def _runtime_seconds(cfg: ExperimentConfig, ctx, feed) -> float:
    t5 = forward.elutriation_time(feed, ctx, 0.05)
    t95 = forward.elutriation_time(feed, ctx, 0.95)
    return t95 - t5


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    updates: dict = {}
    if getattr(args, "bags", None):
        updates.setdefault("schedule", {})["bag_count"] = args.bags
    if getattr(args, "schedule_mode", None):
        updates.setdefault("schedule", {})["mode"] = args.schedule_mode
        if args.schedule_mode == "uniform_from_zero":
            if not getattr(args, "end_time_s", None):
                raise ConfigError("schedule.end_time_s",
                                  "--end-time-s is required for uniform_from_zero")
            updates["schedule"]["end_time_s"] = args.end_time_s
    if getattr(args, "spline_order", None) is not None:
        updates.setdefault("grid", {})["spline_order"] = args.spline_order
    if getattr(args, "sigma", None) is not None:
        updates.setdefault("noise", {})["sigma"] = args.sigma
    if getattr(args, "seed", None) is not None and hasattr(args, "sigma"):
        updates.setdefault("noise", {})["seed"] = args.seed
    return cfg.updated(updates) if updates else cfg


def _simulate_bags(cfg: ExperimentConfig):
    ctx = cfg.context()
    feed = cfg.feed()
    schedule = cfg.schedule(ctx, feed)
    kernels = forward.KernelSet(ctx, schedule)
    bags = forward.bag_masses(feed, kernels)
    if cfg.sigma > 0.0:
        bags = forward.add_noise(bags, cfg.sigma, (cfg.seed, 0, 0))
    return ctx, feed, schedule, kernels, bags


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    ctx, feed, schedule, kernels, bags = _simulate_bags(cfg)
    runtime = _runtime_seconds(cfg, ctx, feed)
    re_end = _laminar_check(cfg, float(schedule.times[-1]))
    out = _out_dir(args)
    _write_csv(out / "bag_masses.csv",
               ["bag_index", "t_start_s", "t_end_s", "mass_kg"], _bag_rows(bags))
    _write_run_json(out / "run.json", "simulate", {cfg.name: cfg.raw}, {
        "runtime_s": runtime,
        "runtime_h": runtime / 3600.0,
        "channel_reynolds_end": re_end,
        "schedule_times_s": [float(t) for t in schedule.times],
        "bag_masses_kg": [float(m) for m in bags.masses],
        "noise_sigma": cfg.sigma,
    }, seed=cfg.seed)
    print(f"runtime (T95-T5): {runtime / 3600.0:.6g} h")
    print(f"wrote {out / 'bag_masses.csv'}")
    return 0


def cmd_kernels(args) -> int:
    cfg = load_config(args.config)
    if args.count:
        cfg = cfg.updated({"schedule": {"bag_count": args.count}})
    ctx = cfg.context()
    feed = cfg.feed()
    schedule = cfg.schedule(ctx, feed)
    kernels = forward.KernelSet(ctx, schedule)
    grid = cfg.grid()
    s_top = min(1.25 * grid.knots[-1], ctx.geom.z * (1.0 - 1e-9))
    s_values = np.linspace(s_top / args.samples, s_top, args.samples)
    table = np.column_stack([kernels.sample(i, s_values)
                             for i in range(kernels.n_bags)])
    out = _out_dir(args)
    header = ["s_m"] + [f"L_{i + 1}" for i in range(kernels.n_bags)]
    _write_csv(out / "kernels.csv", header,
               ((s, *row) for s, row in zip(s_values, table)))
    _write_run_json(out / "run.json", "kernels", {cfg.name: cfg.raw}, {
        "schedule_times_s": [float(t) for t in schedule.times],
        "samples": int(args.samples),
    })
    print(f"wrote {out / 'kernels.csv'}")
    return 0


def _build_single_problem(cfg: ExperimentConfig, bags=None, alpha: float = 0.0):
    ctx = cfg.context()
    feed = cfg.feed()
    grid = cfg.grid()
    if bags is None:
        schedule = cfg.schedule(ctx, feed)
        kernels = forward.KernelSet(ctx, schedule)
        bags = forward.bag_masses(feed, kernels)
        if cfg.sigma > 0.0:
            bags = forward.add_noise(bags, cfg.sigma, (cfg.seed, 0, 0))
    else:
        kernels = forward.KernelSet(ctx, bags.schedule)
    problem = inverse.build_problem(grid, [kernels], [bags], alpha, reference=feed)
    return problem, feed


def _report_reconstruction(recon: inverse.Reconstruction, alpha) -> None:
    msg = f"alpha: {alpha:.6g}  residual: {recon.residual_norm:.6g}"
    if recon.relative_error_pct is not None:
        msg += f"  relative error: {recon.relative_error_pct:.4g}%"
    print(msg)


def cmd_deconvolve(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    bags = None
    if args.masses:
        bags = _read_masses_csv(Path(args.masses))
        expected = cfg.schedule_spec.bag_count
        if bags.schedule.n_bags != expected:
            raise ConfigError("<masses>",
                              f"CSV has {bags.schedule.n_bags} bags, config expects {expected}")
    elif not args.self_generate:
        raise ConfigError("<flags>", "supply a masses CSV or --self-generate")
    problem, feed = _build_single_problem(cfg, bags)
    if args.sweep:
        alpha, recon = inverse.sweep_alpha(problem)
    else:
        alpha = args.alpha
        recon = inverse.deconvolve(problem.with_alpha(alpha))
    out = _out_dir(args)
    _write_reconstruction(out, recon)
    _write_run_json(out / "run.json", "deconvolve", {cfg.name: cfg.raw}, {
        "alpha": alpha,
        "relative_error_pct": recon.relative_error_pct,
        "residual_norm": recon.residual_norm,
        "kkt_residual": recon.solution.kkt_residual,
        "spline_order": cfg.grid_spec.order,
        "mass_kg": recon.spline.total_mass,
    }, seed=cfg.seed)
    _report_reconstruction(recon, alpha)
    print(f"wrote {out / 'reconstruction.csv'}")
    return 0


def cmd_combine(args) -> int:
    cfg_a = load_config(args.config_a)
    cfg_b = load_config(args.config_b)
    prob_a, feed_a = _build_single_problem(cfg_a)
    prob_b, _ = _build_single_problem(cfg_b)
    combined = inverse.combine_deconvolutions(prob_a, prob_b)
    if args.sweep:
        alpha, recon = inverse.sweep_alpha(combined)
    else:
        alpha = args.alpha
        recon = inverse.deconvolve(combined.with_alpha(alpha))
    out = _out_dir(args)
    _write_reconstruction(out, recon)
    hashes = {}
    for label, source in ((cfg_a.name, args.config_a), (cfg_b.name, args.config_b)):
        path = Path(source)
        if not path.exists():
            from .config import preset_path
            path = preset_path(str(source))
        hashes[label] = _sha256(path)
    _write_run_json(out / "run.json", "combine",
                    {cfg_a.name: cfg_a.raw, cfg_b.name: cfg_b.raw}, {
                        "alpha": alpha,
                        "relative_error_pct": recon.relative_error_pct,
                        "residual_norm": recon.residual_norm,
                        "source_hashes": hashes,
                    })
    _report_reconstruction(recon, alpha)
    print(f"wrote {out / 'reconstruction.csv'}")
    return 0


def cmd_noise_study(args) -> int:
    cfg = load_config(args.config)
    sigmas = [float(x) for x in args.sigmas.split(",") if x.strip() != ""]
    if any(s < 0 for s in sigmas):
        raise ConfigError("noise.sigma", "sigmas must be non-negative")
    if args.replicates < 2:
        raise ConfigError("<flags>", "--replicates must be at least 2")
    problem, feed = _build_single_problem(cfg)
    if args.alpha is not None:
        alpha = args.alpha
    else:
        alpha, _ = inverse.sweep_alpha(problem)
        print(f"using best noiseless alpha: {alpha:.6g}")
    rows = inverse.noise_study(problem.with_alpha(alpha), sigmas,
                               args.replicates, args.seed, workers=args.workers)
    out = _out_dir(args)
    _write_csv(out / "noise_study.csv",
               ["sigma", "mean_error", "spread", "sample_std"],
               ((r.sigma, r.mean_error, r.spread, r.sample_std) for r in rows))
    _write_run_json(out / "run.json", "noise-study", {cfg.name: cfg.raw}, {
        "alpha": alpha,
        "replicates": args.replicates,
        "sigmas": sigmas,
        "mean_errors": [r.mean_error for r in rows],
    }, seed=args.seed)
    print(f"wrote {out / 'noise_study.csv'}")
    return 0


def cmd_runtime_sweep(args) -> int:
    lambdas = [float(x) for x in args.lambdas.split(",") if x.strip() != ""]
    if any(lam <= 0 for lam in lambdas):
        raise ConfigError("flow.lambda_m_per_s2", "lambdas must be positive")
    rows = []
    for source in args.configs:
        cfg = load_config(source)
        for lam in lambdas:
            variant = cfg.updated({"flow": {"lambda_m_per_s2": lam}})
            ctx = variant.context()
            feed = variant.feed()
            runtime = _runtime_seconds(variant, ctx, feed)
            rows.append((variant.name, lam, runtime))
            print(f"{variant.name}: lambda={lam:.3g} runtime={runtime / 3600.0:.4g} h")
    out = _out_dir(args)
    _write_csv(out / "runtime_sweep.csv",
               ["config_name", "lambda_m_per_s2", "runtime_s"], rows)
    _write_run_json(out / "run.json", "runtime-sweep",
                    {Path(c).stem: load_config(c).raw for c in args.configs}, {
                        "lambdas": lambdas,
                    })
    print(f"wrote {out / 'runtime_sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elutrikit",
        description="Simulate batch elutriation and deconvolve bag masses "
                    "back into a feed size distribution.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate model bag masses")
    sim.add_argument("config")
    sim.add_argument("--bags", type=int, default=None)
    sim.add_argument("--schedule-mode",
                     choices=["fraction_span", "uniform_from_zero"], default=None)
    sim.add_argument("--end-time-s", type=float, default=None)
    sim.add_argument("--sigma", type=float, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default="out")
    sim.set_defaults(func=cmd_simulate)

    ker = sub.add_parser("kernels", help="sample the bag kernels on a size grid")
    ker.add_argument("config")
    ker.add_argument("--count", type=int, default=None,
                     help="number of bags to sample kernels for")
    ker.add_argument("--samples", type=int, default=400)
    ker.add_argument("--out", default="out")
    ker.set_defaults(func=cmd_kernels)

    dec = sub.add_parser("deconvolve", help="reconstruct the feed from bag masses")
    dec.add_argument("config")
    dec.add_argument("--masses", default=None, help="bag-mass CSV to invert")
    dec.add_argument("--self-generate", action="store_true",
                     help="generate the bag masses from the config's feed")
    group = dec.add_mutually_exclusive_group(required=True)
    group.add_argument("--alpha", type=float, default=None)
    group.add_argument("--sweep", action="store_true")
    dec.add_argument("--spline-order", type=int, choices=[0, 1], default=None)
    dec.add_argument("--out", default="out")
    dec.set_defaults(func=cmd_deconvolve)

    comb = sub.add_parser("combine", help="joint reconstruction from two runs")
    comb.add_argument("config_a")
    comb.add_argument("config_b")
    group = comb.add_mutually_exclusive_group(required=True)
    group.add_argument("--alpha", type=float, default=None)
    group.add_argument("--sweep", action="store_true")
    comb.add_argument("--out", default="out")
    comb.set_defaults(func=cmd_combine)

    noise = sub.add_parser("noise-study", help="error statistics under bag noise")
    noise.add_argument("config")
    noise.add_argument("--sigmas", required=True,
                       help="comma-separated noise levels")
    noise.add_argument("--replicates", type=int, required=True)
    noise.add_argument("--seed", type=int, default=0)
    noise.add_argument("--alpha", type=float, default=None)
    noise.add_argument("--workers", type=int, default=1)
    noise.add_argument("--out", default="out")
    noise.set_defaults(func=cmd_noise_study)

    sweep = sub.add_parser("runtime-sweep", help="runtime against ramp rate")
    sweep.add_argument("configs", nargs="+")
    sweep.add_argument("--lambdas", required=True,
                       help="comma-separated ramp rates, m/s^2")
    sweep.add_argument("--out", default="out")
    sweep.set_defaults(func=cmd_runtime_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (qp.Infeasible, qp.IllPosed, qp.GridMismatch, qp.MaxIterations,
            forward.NoBracket) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
