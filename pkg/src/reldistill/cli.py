"""Command-line interface.

Subcommands: toy-run, metrics, loss-eval, grad-check, sweep,
export-snapshots. Exit codes: 0 success, 1 usage error, 2 runtime or
validation error. Every run that writes output first echoes its fully
resolved configuration, and stdout summary lines are stable line-oriented
text meant for scripting.

The environment variable RD_THREADS caps sweep parallelism (default: the
number of logical CPUs); each individual run stays single-threaded and
deterministic.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import embed_io, gradcheck, metrics, toy
from .errors import NoSameLabelPairs, ReldistillError
from .losses import LOSS_KINDS, evaluate_loss
from .numerics import normalize_rows
from .records import RunRecord

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    pass


def _echo_config(config: dict) -> None:
    print("config: " + json.dumps(config, sort_keys=True))


def _summary_line(summary: dict) -> str:
    return (
        f"dU={summary['delta_uniformity']:.6f} "
        f"dT={summary['delta_tolerance']:.6f} "
        f"G={summary['final_modality_gap']:.6f}"
    )


def _add_toy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--clusters", type=int, choices=(1, 3), default=1)
    p.add_argument("--loss", choices=LOSS_KINDS, default="relational")
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--iterations", type=int, default=None,
                   help="default: 50000 (1 cluster) / 100000 (3 clusters)")
    p.add_argument("--n-points", type=int, default=None,
                   help="default: 1000 (1 cluster) / 1500 (3 clusters)")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=1000)
    p.add_argument("--concentration", type=float, default=toy.DEFAULT_CONCENTRATION)
    p.add_argument("--cluster-angle", type=float, default=toy.DEFAULT_CLUSTER_ANGLE_DEG,
                   help="pairwise angle between cluster centers, degrees")
    p.add_argument("--hidden", type=int, default=512)


def _toy_config(args, **overrides) -> toy.ToyConfig:
    fields = dict(
        clusters=args.clusters,
        n_points=args.n_points,
        iterations=args.iterations,
        learning_rate=args.lr,
        loss_kind=args.loss,
        temperature=args.temperature,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        cluster_concentration=args.concentration,
        cluster_angle_deg=args.cluster_angle,
        hidden=args.hidden,
    )
    fields.update(overrides)
    try:
        return toy.ToyConfig(**fields)
    except ReldistillError as exc:
        # bad flag values are usage errors, not runtime failures
        raise UsageError(f"{type(exc).__name__}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _write_snapshots(record: RunRecord, out_path: Path, data) -> None:
    stem = out_path.with_suffix("")
    for iteration, points in record.snapshots or []:
        embed_io.write_embeddings(Path(f"{stem}_snapshot_{iteration:08d}.emb"), points)
    embed_io.write_embeddings(Path(f"{stem}_targets.emb"), data.targets)
    embed_io.write_labels(Path(f"{stem}_labels.lbl"), data.labels)


def _cmd_toy_run(args) -> int:
    if args.snapshots and not args.out:
        raise UsageError("--snapshots requires --out")
    if args.n_points is not None and args.n_points % args.clusters != 0:
        raise UsageError(
            f"--n-points {args.n_points} not divisible by --clusters {args.clusters}"
        )
    config = _toy_config(args, record_snapshots=bool(args.snapshots))
    _echo_config(config.as_dict())
    record = toy.run_toy(config)
    if args.out:
        out = Path(args.out)
        embed_io.write_run_record(out, record)
        if args.snapshots:
            _write_snapshots(record, out, toy.build_dataset(config))
        print(f"record: {out}")
        print(f"trajectory: {embed_io.trajectory_csv_path(out)}")
    print(_summary_line(record.summary))
    return 0


def _load_matrix(path) -> np.ndarray:
    return normalize_rows(embed_io.read_embeddings(path))


def _cmd_metrics(args) -> int:
    sub = dict(subsample_threshold=args.max_n, subsample_seed=args.subsample_seed)
    resolved = dict(
        k=args.k, q=args.q, labels=args.labels, t=args.t,
        max_n=args.max_n, subsample_seed=args.subsample_seed,
        normalization="rows l2-normalized before metrics",
    )
    _echo_config(resolved)
    labels = None
    if args.labels:
        labels = embed_io.read_labels(args.labels)
    out: dict = {"normalization": resolved["normalization"], "t": args.t}

    def one_matrix(name: str, path: str) -> np.ndarray:
        m = _load_matrix(path)
        section = {"path": str(path), "rows": int(m.shape[0]), "cols": int(m.shape[1])}
        section["uniformity"] = metrics.uniformity(m, args.t, **sub)
        if labels is not None:
            embed_io.check_paired(m, labels)
            try:
                section["tolerance"] = metrics.tolerance(m, labels, **sub)
            except NoSameLabelPairs:
                section["tolerance"] = None
                print(
                    f"warning: {name}: no two rows share a label; "
                    "tolerance reported as null",
                    file=sys.stderr,
                )
        out[name] = section
        return m

    k = one_matrix("k", args.k)
    if args.q:
        q = one_matrix("q", args.q)
        vector, norm = metrics.modality_gap(k, q)
        out["modality_gap"] = {
            "vector": [float(v) for v in vector],
            "norm": norm,
            "convention": metrics.GAP_CONVENTION["modality_gap"],
        }
        print(f"G={norm:.6f}")
    print(f"U_k={out['k']['uniformity']:.6f}")
    if out["k"].get("tolerance") is not None:
        print(f"T_k={out['k']['tolerance']:.6f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2)
            fh.write("\n")
        print(f"report: {args.out}")
    return 0


def _cmd_loss_eval(args) -> int:
    if args.loss == "contrastive" and not (args.temperature > 0.0):
        raise UsageError(f"temperature must be > 0, got {args.temperature}")
    _echo_config(dict(loss=args.loss, k=args.k, q=args.q, temperature=args.temperature,
                      normalization="rows l2-normalized before evaluation"))
    k = _load_matrix(args.k)
    q = _load_matrix(args.q)
    result = evaluate_loss(args.loss, k, q, args.temperature)
    grad_norm = float(np.linalg.norm(result.grad_k))
    print(f"loss={result.value!r} grad_norm={grad_norm!r}")
    if args.out:
        payload = {
            "loss_kind": args.loss,
            "temperature": args.temperature,
            "value": result.value,
            "grad_norm": grad_norm,
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def _cmd_grad_check(args) -> int:
    if args.loss in gradcheck.RELATIONAL_KINDS and args.n < 2:
        raise UsageError(f"{args.loss} needs --n >= 2")
    if args.loss == "contrastive" and not (args.temperature > 0.0):
        raise UsageError(f"temperature must be > 0, got {args.temperature}")
    _echo_config(dict(loss=args.loss, n=args.n, c=args.c, trials=args.trials,
                      seed=args.seed, temperature=args.temperature, step=args.step,
                      tolerance=args.tolerance))
    result = gradcheck.check_loss_gradient(
        args.loss, n=args.n, c=args.c, trials=args.trials, seed=args.seed,
        temperature=args.temperature, step=args.step,
    )
    print(
        f"max_rel_error={result.max_rel_error:.3e} "
        f"trials_run={result.trials_run} skipped_kinks={result.skipped_kinks}"
    )
    if not result.passed(args.tolerance):
        print(
            f"grad-check failed (worst instance seed {result.worst_seed})",
            file=sys.stderr,
        )
        return RUNTIME_ERROR
    return 0


def _sweep_run(job: tuple) -> dict:
    """Executes one sweep member in a worker process."""
    config_fields, out_path = job
    try:
        config = toy.ToyConfig(**config_fields)
        record = toy.run_toy(config)
        embed_io.write_run_record(Path(out_path), record)
        return {"ok": True, "summary": record.summary}
    except Exception as exc:  # noqa: BLE001 - reported per-run in the aggregate
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _parse_sweep_values(param: str, raw: str) -> list:
    parts = [v.strip() for v in raw.split(",") if v.strip()]
    if not parts:
        raise UsageError("--values must be a nonempty comma-separated list")
    if param == "temperature":
        return [float(v) for v in parts]
    if param == "seed":
        return [int(v) for v in parts]
    for v in parts:
        if v not in LOSS_KINDS:
            raise UsageError(f"unknown loss kind {v!r} in --values")
    return parts


def _cmd_sweep(args) -> int:
    values = _parse_sweep_values(args.param, args.values)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    field_for = {"temperature": "temperature", "seed": "seed", "loss": "loss_kind"}
    jobs = []
    for value in values:
        config = _toy_config(args, **{field_for[args.param]: value})
        path = out_dir / f"run_{args.param}_{value}.json"
        jobs.append((config.as_dict(), str(path)))
    _echo_config(dict(param=args.param, values=values, out=str(out_dir),
                      base=jobs[0][0]))

    threads = os.environ.get("RD_THREADS")
    workers = int(threads) if threads else (os.cpu_count() or 1)
    workers = max(1, min(workers, len(jobs)))
    if workers == 1:
        results = [_sweep_run(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_run, jobs))

    agg_path = out_dir / "sweep.csv"
    failed = 0
    with open(agg_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["value", "delta_uniformity", "delta_tolerance", "modality_gap", "status"]
        )
        for value, res in zip(values, results):
            if res["ok"]:
                s = res["summary"]
                writer.writerow(
                    [value, repr(s["delta_uniformity"]), repr(s["delta_tolerance"]),
                     repr(s["final_modality_gap"]), "ok"]
                )
                print(f"value={value} " + _summary_line(s))
            else:
                failed += 1
                writer.writerow([value, "", "", "", res["error"]])
                print(f"value={value} failed: {res['error']}", file=sys.stderr)
    print(f"aggregate: {agg_path}")
    return RUNTIME_ERROR if failed else 0


def _cmd_export_snapshots(args) -> int:
    loaded = embed_io.read_run_record(args.record)
    config = toy.ToyConfig(**{**loaded.config, "record_snapshots": True})
    _echo_config(config.as_dict())
    replay = toy.run_toy(config)
    if replay.to_json_dict() != loaded.to_json_dict():
        print(
            "error: replay does not reproduce the stored record "
            "(was it produced by a different build or environment?)",
            file=sys.stderr,
        )
        return RUNTIME_ERROR
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for iteration, points in replay.snapshots or []:
        if args.every > 1 and iteration % (config.checkpoint_every * args.every) != 0:
            continue
        embed_io.write_embeddings(out_dir / f"snapshot_{iteration:08d}.emb", points)
        count += 1
    data = toy.build_dataset(config)
    embed_io.write_embeddings(out_dir / "targets.emb", data.targets)
    embed_io.write_labels(out_dir / "labels.lbl", data.labels)
    print(f"exported {count} snapshots to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reldistill", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-run", help="train the unit-sphere testbed once")
    _add_toy_flags(p)
    p.add_argument("--out", default=None, help="write the run record (JSON + CSV) here")
    p.add_argument("--snapshots", action="store_true",
                   help="also export per-checkpoint point coordinates (needs --out)")
    p.set_defaults(func=_cmd_toy_run)

    p = sub.add_parser("metrics", help="audit embedding dumps")
    p.add_argument("--k", required=True, help="embedding file (student/points)")
    p.add_argument("--q", default=None, help="embedding file (target/pixels)")
    p.add_argument("--labels", default=None)
    p.add_argument("--t", type=float, default=metrics.DEFAULT_T)
    p.add_argument("--max-n", type=int, default=metrics.DEFAULT_SUBSAMPLE_THRESHOLD,
                   help="subsample above this many rows")
    p.add_argument("--subsample-seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("loss-eval", help="evaluate one loss on two dumps")
    p.add_argument("--loss", choices=LOSS_KINDS, required=True)
    p.add_argument("--k", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_loss_eval)

    p = sub.add_parser("grad-check", help="finite-difference check of a loss gradient")
    p.add_argument("--loss", choices=LOSS_KINDS, required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--c", type=int, default=4)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--step", type=float, default=gradcheck.DEFAULT_STEP)
    p.add_argument("--tolerance", type=float, default=gradcheck.DEFAULT_TOLERANCE)
    p.set_defaults(func=_cmd_grad_check)

    p = sub.add_parser("sweep", help="run the testbed across a parameter grid")
    p.add_argument("--param", choices=("temperature", "seed", "loss"), required=True)
    p.add_argument("--values", required=True, help="comma-separated value list")
    _add_toy_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("export-snapshots",
                       help="replay a stored run and export its point snapshots")
    p.add_argument("--record", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--every", type=int, default=1,
                   help="export every Nth checkpoint only")
    p.set_defaults(func=_cmd_export_snapshots)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except ReldistillError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
