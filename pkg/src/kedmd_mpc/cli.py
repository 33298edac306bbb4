"""Command line entry point: ``kedmd-mpc fit|mpc|analyze|reproduce``.

Exit codes: 0 success, 1 numerical or infeasibility failure, 2 bad
configuration or input.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .analysis import (
    compute_alpha,
    compute_B_eps,
    convergence_study,
    default_test_set,
    estimate_growth_bounds,
    estimate_modulus,
    minimal_stabilizing_horizon,
    plant_lipschitz,
)
from .control import error_constants
from .exceptions import (
    ClosedLoopAborted,
    ConfigurationError,
    DomainError,
    DuplicatePointsError,
    KedmdError,
)
from .mpc import mpc_closed_loop
from .pipeline import (
    FIGURES,
    RunConfig,
    figure_scenarios,
    fit_from_config,
    load_config,
    run_scenario,
    summarize_trace,
)
from .plotting import save_semilogy

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2
CONFIG_ERRORS = (ConfigurationError, DomainError, DuplicatePointsError)


def _fmt(v):
    if isinstance(v, (bool, str)) or v is None:
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return io.fmt(v)


def _write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_record(path, record: dict):
    _write_table(path, ["key", "value"], record.items())


def _outdir(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_fit(cfg: RunConfig):
    """Fit the surrogate and write ``model.txt``, ``grid.csv`` and ``diagnostics.csv``."""
    out = _outdir(cfg)
    plant, data, model = fit_from_config(cfg)
    ec = error_constants(model, data, plant.domain, cfg.fill_resolution)
    io.save_surrogate(model, out / "model.txt")
    io.save_grid(model.clusters, out / "grid.csv")
    record = {"d": data.d, "eps_c": data.eps_c, "samples": data.total, "seed": data.seed, "lam": model.lam}
    record.update(ec.as_dict())
    _write_record(out / "diagnostics.csv", record)
    return model, ec


def _load_model(cfg: RunConfig, model_path):
    if cfg.exact_plant:
        return cfg.plant()
    if model_path is None:
        return fit_from_config(cfg)[2]
    p = Path(model_path)
    if not p.is_file():
        raise ConfigurationError(f"model file not found: {p}")
    return io.load_surrogate(p)


def _write_run(out: Path, stem: str, trace):
    io.save_trace(trace, out / f"{stem}.csv")
    s = summarize_trace(trace)
    _write_record(out / f"{stem}_summary.csv", s.as_dict())
    return s


def cmd_mpc(cfg: RunConfig, model_path=None):
    """Closed loop from ``x0``; writes ``trace.csv`` and ``trace_summary.csv``.

    On infeasibility the partial trace is written before the error propagates.
    """
    out = _outdir(cfg)
    model = _load_model(cfg, model_path)
    plant = cfg.plant()
    try:
        trace = mpc_closed_loop(plant, model, np.array(cfg.x0), cfg.steps, cfg.cost(), cfg.ocp())
    except ClosedLoopAborted as exc:
        io.save_trace(exc.trace, out / "trace_partial.csv")
        raise
    summary = _write_run(out, "trace", trace)
    if cfg.plot:
        save_semilogy(out / "trace.svg", [("closed loop", np.arange(trace.steps + 1), trace.norms())],
                      title="closed-loop ||x(k)||")
    return trace, summary


def cmd_analyze(cfg: RunConfig, model_path=None):
    """Growth bounds, alpha_N, B_N^eps, modulus and convergence tables plus ``report.txt``."""
    out = _outdir(cfg)
    plant = cfg.plant()
    cost = cfg.cost()
    if model_path is None:
        _, data, model = fit_from_config(cfg)
    else:
        model = _load_model(cfg.replace(exact_plant=False), model_path)
        data = None
    # growth constants of the true system on a uniform grid without the origin
    g = np.linspace(-cfg.growth_half_width, cfg.growth_half_width, cfg.growth_grid)
    xs = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    xs = xs[np.linalg.norm(xs, axis=1) > 0]
    B = estimate_growth_bounds(plant, cost, cfg.ocp(1), xs, cfg.n_max)
    _write_table(out / "growth_bounds.csv", ["k", "B_k"], [(k, B.B(k)) for k in range(1, cfg.n_max + 1)])
    alphas = [(N, compute_alpha(B, N)) for N in range(2, cfg.n_max + 1)]
    _write_table(out / "alpha.csv", ["N", "alpha_N"], alphas)
    n_min = minimal_stabilizing_horizon(B)

    L_F = plant_lipschitz(plant, plant.domain, plant.control_box)
    ec = error_constants(model, data, plant.domain, cfg.fill_resolution)
    C, eps_h = ec.c, ec.eps_h
    scales = (0.0, 0.01, 0.1, 1.0)
    rows = []
    for N in range(2, cfg.n_max + 1):
        rows.append([N] + [compute_B_eps(B, N, L_F, C, s * eps_h, cost.lambda_max, cost.lambda_min) for s in scales])
    _write_table(out / "B_eps.csv", ["N"] + [f"eps_h_x{s:g}" for s in scales], rows)

    modulus = estimate_modulus(model, plant.domain, plant.control_box, cfg.modulus_pairs, cfg.seed)
    test = default_test_set(plant.domain, plant.control_box, cfg.test_per_axis, seed=12345)
    # the trend is studied without sampling error, eps_c = 0
    study = convergence_study(plant, list(cfg.convergence_d), test, 0.0, cfg.samples_per_cluster,
                              cfg.seed, model.kernel, cfg.lam, cfg.fill_resolution)
    _write_table(out / "convergence.csv", ["d", "fill_distance", "sup_error", "sup_ratio"], study.rows())
    constants = {"L_F": L_F, "C": C, "eps_h": eps_h, "modulus": modulus, "min_stabilizing_N": n_min,
                 "convergence_slope": study.slope, "convergence_residual": study.residual}
    constants.update({f"ec_{k}": v for k, v in ec.as_dict().items()})
    _write_record(out / "constants.csv", constants)

    lines = ["kEDMD-MPC analysis report", ""]
    lines.append(f"growth constants (true plant, {len(B.samples)} sample states, estimates not certificates)")
    lines += [f"  B_{k:<2d} = {B.B(k):.6g}" for k in range(1, cfg.n_max + 1)]
    lines.append("")
    lines.append("alpha_N")
    lines += [f"  N={N:<2d} alpha={a:.6g}" for N, a in alphas]
    lines.append(f"minimal N with alpha_N > 0: {n_min if n_min is not None else 'none up to ' + str(cfg.n_max)}")
    lines.append("")
    lines.append(f"L_F = {L_F:.6g}, C = {C:.6g}, eps_h = {eps_h:.6g}, modulus estimate = {modulus:.6g}")
    lines.append("")
    lines.append("convergence study (eps_c = 0)")
    lines += [f"  d={d:<5d} h_X={h:.4g} sup_error={e:.4g}" for d, h, e, _ in study.rows()]
    lines.append(f"  log-log slope {study.slope:.4g} (residual {study.residual:.3g})")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"B": B, "alphas": alphas, "n_min": n_min, "study": study, "constants": constants}


def cmd_reproduce(cfg: RunConfig, figure: str):
    """Run the scenarios of ``figure``; writes one CSV per run, ``<figure>_summary.csv`` and an SVG."""
    scenarios = figure_scenarios(figure, cfg)
    out = _outdir(cfg)
    workers = cfg.workers or os.cpu_count() or 1
    workers = max(1, min(workers, len(scenarios)))
    if workers == 1:
        results = [run_scenario(s) for s in scenarios]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_scenario, scenarios))
    rows, curves, summaries = [], [], {}
    for sc, trace in results:
        s = _write_run(out, f"{figure}_{sc.name}", trace)
        summaries[sc.name] = s
        c = sc.config
        rows.append([sc.name, c.d, c.eps_c_value, c.horizon] + list(s.as_dict().values()))
        curves.append((sc.label, np.arange(trace.steps + 1), trace.norms()))
    head = ["run", "d", "eps_c", "N"] + list(next(iter(summaries.values())).as_dict())
    _write_table(out / f"{figure}_summary.csv", head, rows)
    if cfg.plot:
        save_semilogy(out / f"{figure}.svg", curves, title=f"kEDMD-MPC closed loop ({figure})")
    return summaries


def _attribution(exc) -> str:
    """Package module in which ``exc`` was raised."""
    mod = "cli"
    for frame in traceback.extract_tb(exc.__traceback__):
        p = Path(frame.filename)
        if p.parent.name == "kedmd_mpc":
            mod = p.stem
    return mod


def build_parser():
    p = argparse.ArgumentParser(prog="kedmd-mpc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("fit", "fit the surrogate"), ("mpc", "run the closed loop"),
                           ("analyze", "stability and convergence analysis"),
                           ("reproduce", "reproduce a closed-loop figure")):
        sp = sub.add_parser(name, help=helptext)
        if name == "reproduce":
            sp.add_argument("figure", choices=FIGURES)
        sp.add_argument("--config", help="key = value config file")
        if name in ("mpc", "analyze"):
            sp.add_argument("--model", help="surrogate file written by 'fit'")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="data seed (overrides the config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, out=args.out, seed=args.seed)
        if args.seed is not None and args.seed < 0:
            raise ConfigurationError("seed must be nonnegative")
        if args.command == "fit":
            _, ec = cmd_fit(cfg)
            print(f"model written to {Path(cfg.out) / 'model.txt'} (h_X = {ec.fill_distance:.4g})")
        elif args.command == "mpc":
            _, s = cmd_mpc(cfg, args.model)
            print(f"final ||x|| = {s.final_norm:.4g}, plateau = {s.plateau:.4g}, decay slope = {s.decay_slope:.4g}")
        elif args.command == "analyze":
            res = cmd_analyze(cfg, args.model)
            print(f"report written to {Path(cfg.out) / 'report.txt'} (minimal N = {res['n_min']})")
        else:
            for name, s in cmd_reproduce(cfg, args.figure).items():
                print(f"{name}: final={s.final_norm:.3e} plateau={s.plateau:.3e} decay={s.decay_slope:.4g}")
    except CONFIG_ERRORS as exc:
        print(f"error [{_attribution(exc)}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KedmdError as exc:
        print(f"error [{_attribution(exc)}]: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
