"""Command-line surface: generate / fit / eval / export-grid.

Exit codes: 0 on success, 2 on validation errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .engine import diagnostics, intensity_samples, run_chain_with_info, summarize
from .errors import NumericalError, ValidationError
from .generate import sample_events, sample_ground_truth
from .metrics import Quadrature, kde_intensity, l2_error, poisson_loglik, predictive_loglik, sample_logliks
from .sgcp import EventSet


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depcox",
        description="Dependent Cox process inference: generate, fit, evaluate, export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="sample ground truth and event files")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=None)

    p_fit = sub.add_parser("fit", help="run the sampler on event files")
    p_fit.add_argument("events", nargs="+", help="event CSV files")
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--out", required=True, help="archive directory to write")
    p_fit.add_argument("--seed", type=int, default=None)

    p_eval = sub.add_parser("eval", help="score an archive on held-out events")
    p_eval.add_argument("archive")
    p_eval.add_argument("events", nargs="*", help="test event CSV files (archive split if omitted)")
    p_eval.add_argument("--config", default=None, help="config override for baselines")
    p_eval.add_argument("--out", default=None, help="report CSV path (stdout if omitted)")
    p_eval.add_argument("--baselines", action="store_true")
    p_eval.add_argument("--truth", default=None, help="ground-truth manifest for L2 rows")
    p_eval.add_argument("--seed", type=int, default=None)

    p_exp = sub.add_parser("export-grid", help="export intensity and latent surfaces")
    p_exp.add_argument("archive")
    p_exp.add_argument("--out", required=True)
    p_exp.add_argument("--resolution", type=int, default=100)
    p_exp.add_argument("--seed", type=int, default=None)
    return parser


def cmd_generate(args) -> int:
    cfg = io.load_config(args.config)
    seed = cfg.run.seed if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    gen = dict(cfg.generate)
    n_proc = int(gen.pop("n_processes", 4))
    gen.setdefault("grid_per_axis", cfg.run.grid_per_axis)
    gen.setdefault("grid_pad", cfg.run.grid_pad)
    truth = sample_ground_truth(cfg.region, n_proc, cfg.run.n_latent, rng, **_tupled(gen))
    events = sample_events(truth, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for ev in events:
        io.write_event_file(out / f"events_{ev.process_id}.csv", ev, cfg.region.dim)
    io.save_truth(out / "truth_manifest.json", truth)
    print(f"wrote {n_proc} event files and truth_manifest.json to {out}")
    return 0


def _tupled(gen: dict) -> dict:
    out = {}
    for key, value in gen.items():
        out[key] = tuple(value) if isinstance(value, list) else value
    return out


def cmd_fit(args) -> int:
    cfg = io.load_config(args.config)
    if args.seed is not None:
        cfg.run.seed = args.seed
    events = io.read_event_files(args.events)
    _validate_in_region(args.events, cfg)
    rng = np.random.default_rng(cfg.run.seed)
    train, test, split_idx = _split(events, cfg.train_fraction, rng)
    samples, info = run_chain_with_info(train, cfg.region, cfg.run)
    diag = diagnostics(samples) if len(samples) >= 2 else {"processes": [], "n_samples": len(samples)}
    timings = {
        "timings_seconds": info.timings,
        "iterations_per_second": info.iterations_per_second,
        "hmc_accept_rate": info.hmc_accept_rate.tolist(),
        "phi_accept_rate": info.phi_accept_rate,
    }
    io.save_archive(args.out, cfg, train, test, split_idx, samples, diag, timings)
    print(
        f"archive written to {args.out}: {len(samples)} samples, "
        f"{info.iterations_per_second:.2f} iterations/sec"
    )
    return 0


def _validate_in_region(paths, cfg) -> None:
    for path in paths:
        for row_no, pid, point in io.iter_event_rows(path):
            if not cfg.region.contains_point(np.asarray(point)):
                raise ValidationError(
                    f"{path}:{row_no}: event for process {pid} lies outside the region"
                )


def _split(events, fraction, rng):
    train, test, indices = [], [], []
    for ev in events:
        n = len(ev)
        n_train = int(round(fraction * n))
        perm = rng.permutation(n)
        tr = np.sort(perm[:n_train])
        te = np.sort(perm[n_train:])
        train.append(EventSet(ev.points[tr], ev.process_id))
        test.append(EventSet(ev.points[te], ev.process_id))
        indices.append(
            {"process": int(ev.process_id), "train": tr.tolist(), "test": te.tolist()}
        )
    return train, test, indices


def cmd_eval(args) -> int:
    archive = io.load_archive(args.archive)
    cfg = io.load_config(args.config) if args.config else archive.config
    if cfg.region.dim != archive.config.region.dim:
        raise ValidationError("config region dimension does not match archive")
    if args.events:
        test = io.read_event_files(args.events)
    else:
        test = archive.test
    if len(test) != len(archive.train):
        raise ValidationError(
            f"archive has {len(archive.train)} processes but test data has {len(test)}"
        )
    quad = Quadrature.for_region(cfg.region, cfg.quad_resolution())
    rows = []
    rows += _model_rows("ours", archive.samples, archive, test, quad)
    truth = io.load_truth(args.truth) if args.truth else None
    if truth is not None:
        rows += _l2_rows("ours", archive.samples, archive, truth, quad)
    if args.baselines:
        ind_cfg = replace(archive.config.run, independent=True)
        if args.seed is not None:
            ind_cfg = replace(ind_cfg, seed=args.seed)
        ind_samples, _ = run_chain_with_info(archive.train, cfg.region, ind_cfg)
        rows += _model_rows("independent", ind_samples, archive, test, quad, independent=True)
        if truth is not None:
            rows += _l2_rows("independent", ind_samples, archive, truth, quad, independent=True)
        rows += _kde_rows(archive, test, quad, truth)
    if args.out:
        io.write_report(args.out, rows)
        print(f"report written to {args.out}")
    else:
        print("dataset,model,metric,value")
        for dataset, model, metric, value in rows:
            print(f"{dataset},{model},{metric},{value}")
    return 0


def _model_rows(model, samples, archive, test, quad, independent=False):
    cfg_run = archive.config.run
    if independent:
        cfg_run = replace(cfg_run, independent=True)
    region = archive.config.region
    rows = []
    grid_lams = intensity_samples(samples, quad.nodes, archive.train, region, cfg_run)
    for d, ev in enumerate(test):
        if len(ev):
            ev_lams = intensity_samples(samples, ev.points, archive.train, region, cfg_run)[:, d, :]
        else:
            ev_lams = np.zeros((len(samples), 0))
        lls = sample_logliks(ev_lams, grid_lams[:, d, :], quad)
        rows.append((f"process_{d}", model, "predictive_loglik", predictive_loglik(ev_lams, grid_lams[:, d, :], quad)))
        finite = lls[np.isfinite(lls)]
        rows.append(
            (f"process_{d}", model, "mean_sample_loglik", float(np.mean(finite)) if finite.size else -np.inf)
        )
    return rows


def _l2_rows(model, samples, archive, truth, quad, independent=False):
    cfg_run = archive.config.run
    if independent:
        cfg_run = replace(cfg_run, independent=True)
    region = archive.config.region
    lam = intensity_samples(samples, quad.nodes, archive.train, region, cfg_run).mean(axis=0)
    rows = []
    for d in range(len(archive.train)):
        true_lam = truth.intensity(d, quad.nodes)
        rows.append((f"process_{d}", model, "l2_error", l2_error(lam[d], true_lam, quad)))
    return rows


def _kde_rows(archive, test, quad, truth):
    rows = []
    for d, (train_ev, test_ev) in enumerate(zip(archive.train, test)):
        if len(train_ev) < 2:
            continue
        lam_grid = kde_intensity(train_ev.points, archive.config.region, quad)
        if len(test_ev):
            # nearest-node lookup keeps the baseline on the same grid as its integral
            idx = _nearest_nodes(quad.nodes, test_ev.points)
            lam_ev = lam_grid[idx]
        else:
            lam_ev = np.zeros(0)
        rows.append((f"process_{d}", "kde", "predictive_loglik", poisson_loglik(lam_ev, lam_grid, quad)))
        if truth is not None:
            rows.append(
                (f"process_{d}", "kde", "l2_error", l2_error(lam_grid, truth.intensity(d, quad.nodes), quad))
            )
    return rows


def _nearest_nodes(nodes, points):
    d2 = np.sum((points[:, None, :] - nodes[None, :, :]) ** 2, axis=-1)
    return np.argmin(d2, axis=1)


def cmd_export_grid(args) -> int:
    archive = io.load_archive(args.archive)
    if not archive.samples:
        raise ValidationError("archive holds no samples")
    region = archive.config.region
    if args.resolution < 2:
        raise ValidationError("resolution must be at least 2")
    quad = Quadrature.for_region(region, args.resolution)
    summary = summarize(archive.samples, quad.nodes, archive.train, region, archive.config.run)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for d in range(summary.intensity_mean.shape[0]):
        io.write_grid_file(
            out / f"intensity_process_{d}.csv",
            summary.grid,
            summary.intensity_mean[d],
            summary.intensity_sd[d],
        )
    for q in range(summary.latent_mean.shape[0]):
        io.write_grid_file(
            out / f"latent_{q}.csv", summary.grid, summary.latent_mean[q], summary.latent_sd[q]
        )
    print(f"grids written to {out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "fit": cmd_fit,
        "eval": cmd_eval,
        "export-grid": cmd_export_grid,
    }
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
