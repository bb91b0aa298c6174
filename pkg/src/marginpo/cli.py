"""Command-line entry point: generate / train / solve / analyze.

Every command appends a manifest entry (out_dir/manifest.json) before doing
work and completes it afterwards, so an interrupted run is visible as an
entry with no end timestamp. Exit codes: 0 success, 1 analysis tolerance
failure, 2 configuration or validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

import marginpo
from marginpo.analysis import (
    gamma_vs_gap_curve,
    tau_sweep,
    theorem_scan,
    write_curve_csv,
    write_tau_sweep_csv,
    write_theorem_csv,
)
from marginpo.config import build_gen_config, build_train_config, load_config
from marginpo.datagen import flip_labels, generate
from marginpo.errors import ConfigError, NumericError
from marginpo.solver import SolverConfig, solve, write_trace_csv
from marginpo.trainer import save_checkpoint, train
from marginpo.types import load_dataset, save_dataset

__all__ = ["main"]


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _config_hash(config_path, overrides: dict) -> str:
    h = hashlib.sha256()
    if config_path:
        with open(config_path, "rb") as fh:
            h.update(fh.read())
    h.update(json.dumps(overrides, sort_keys=True).encode())
    return h.hexdigest()


class _Manifest:
    """Append-style manifest of command invocations in one output directory."""

    def __init__(self, out_dir: str):
        self.path = os.path.join(out_dir, "manifest.json")

    def _read(self) -> dict:
        if os.path.exists(self.path):
            with open(self.path) as fh:
                return json.load(fh)
        return {"entries": []}

    def _write(self, doc: dict) -> None:
        with open(self.path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")

    def begin(self, command: str, config_hash: str, seeds: list) -> int:
        doc = self._read()
        entry_id = len(doc["entries"])
        doc["entries"].append(
            {
                "id": entry_id,
                "command": command,
                "config_hash": config_hash,
                "seeds": seeds,
                "toolkit_version": marginpo.__version__,
                "started_at": _utcnow(),
                "ended_at": None,
                "artifacts": [],
                "summary": None,
            }
        )
        self._write(doc)
        return entry_id

    def end(self, entry_id: int, artifacts: list, summary: dict) -> None:
        doc = self._read()
        entry = doc["entries"][entry_id]
        entry["ended_at"] = _utcnow()
        entry["artifacts"] = artifacts
        entry["summary"] = summary
        self._write(doc)


def _parse_seeds(spec: str) -> list[int]:
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in spec.split(",") if tok.strip()]


# ----------------------------------------------------------------- commands


def _cmd_generate(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    if not args.config:
        raise ConfigError("generate requires --config")
    gen = build_gen_config(cfg, seed_override=args.seed)
    manifest = _Manifest(args.out_dir)
    entry = manifest.begin(
        "generate", _config_hash(args.config, {"seed": args.seed}), [gen.seed]
    )
    train_ds, heldout_ds = generate(gen)
    flip_rate = cfg.get("data.flip_rate", 0.0)
    if flip_rate > 0.0:
        flip_seed = cfg.get("data.flip_seed", gen.seed + 1000)
        train_ds = flip_labels(train_ds, flip_rate, flip_seed)
    train_path = os.path.join(args.out_dir, "dataset.json")
    heldout_path = os.path.join(args.out_dir, "dataset.heldout.json")
    save_dataset(train_ds, train_path)
    save_dataset(heldout_ds, heldout_path)
    manifest.end(
        entry,
        [train_path, heldout_path],
        {
            "train_pairs": len(train_ds.pairs),
            "heldout_pairs": len(heldout_ds.pairs),
            "flipped": sum(p.flipped for p in train_ds.pairs),
        },
    )
    return 0


def _train_one(payload):
    train_ds, heldout_ds, config = payload
    policy, report = train(train_ds, config, heldout=heldout_ds)
    return config.seed, policy, report


def _cmd_train(args) -> int:
    if not args.config:
        raise ConfigError("train requires --config")
    cfg = load_config(args.config)
    base = build_train_config(cfg, seed_override=args.seed)
    train_ds = load_dataset(args.dataset, split="train")
    heldout_path = args.heldout
    if heldout_path is None:
        stem, ext = os.path.splitext(args.dataset)
        candidate = stem + ".heldout" + ext
        heldout_path = candidate if os.path.exists(candidate) else None
    heldout_ds = (
        load_dataset(heldout_path, split="heldout") if heldout_path else None
    )

    seeds = _parse_seeds(args.seeds) if args.seeds else [base.seed]
    manifest = _Manifest(args.out_dir)
    entry = manifest.begin(
        "train",
        _config_hash(args.config, {"seed": args.seed, "seeds": args.seeds}),
        seeds,
    )

    jobs = [(train_ds, heldout_ds, replace(base, seed=s)) for s in seeds]
    if args.jobs > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(job) for job in jobs]
    results.sort(key=lambda r: r[0])

    artifacts = []
    for seed, policy, report in results:
        report_path = os.path.join(args.out_dir, f"report_seed{seed}.json")
        ckpt_path = os.path.join(args.out_dir, f"checkpoint_seed{seed}.bin")
        with open(report_path, "w") as fh:
            fh.write(report.to_json())
        save_checkpoint(policy, ckpt_path)
        artifacts.extend([report_path, ckpt_path])

    summary = {
        "final_train_loss": [r[2].train_loss[-1] if r[2].train_loss else None for r in results],
        "final_heldout_accuracy": [
            r[2].heldout_accuracy[-1] if r[2].heldout_accuracy else None for r in results
        ],
    }
    if len(seeds) > 1:
        summary_path = os.path.join(args.out_dir, "reports_summary.csv")
        with open(summary_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("seed", "train_loss_final", "heldout_accuracy_final"))
            losses, accs = [], []
            for seed, _, report in results:
                loss = report.train_loss[-1] if report.train_loss else ""
                acc = report.heldout_accuracy[-1] if report.heldout_accuracy else ""
                writer.writerow((seed, repr(loss) if loss != "" else "", repr(acc) if acc != "" else ""))
                if loss != "":
                    losses.append(loss)
                if acc != "":
                    accs.append(acc)
            writer.writerow(
                (
                    "mean",
                    repr(float(np.mean(losses))) if losses else "",
                    repr(float(np.mean(accs))) if accs else "",
                )
            )
        artifacts.append(summary_path)
    manifest.end(entry, artifacts, summary)
    return 0


def _read_margins_csv(path) -> np.ndarray:
    values = []
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read margins file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ConfigError(f"non-numeric margin at row {lineno}: {line!r}") from None
    if not values:
        raise ConfigError(f"margins file {path} contains no values")
    return np.array(values)


def _cmd_solve(args) -> int:
    margins = _read_margins_csv(args.margins)
    try:
        config = SolverConfig(
            gamma0=args.gamma0,
            tau=args.tau,
            eta=args.eta,
            iterations=args.iterations,
            pool_size=max(margins.size, 1),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    manifest = _Manifest(args.out_dir)
    entry = manifest.begin(
        "solve",
        _config_hash(None, {"gamma0": args.gamma0, "tau": args.tau, "eta": args.eta,
                            "iterations": args.iterations, "margins": args.margins}),
        [],
    )
    state = solve(margins, config)
    if not np.all(np.isfinite(state.gammas)):
        raise NumericError("solver produced non-finite gammas")
    trace_path = os.path.join(args.out_dir, "trace.csv")
    curve_path = os.path.join(args.out_dir, "curve.csv")
    write_trace_csv(state, trace_path)
    m_sorted, g_sorted = gamma_vs_gap_curve(margins, config)
    write_curve_csv(m_sorted, g_sorted, config.gamma0, curve_path)
    manifest.end(
        entry,
        [trace_path, curve_path],
        {
            "n": int(margins.size),
            "objective_final": float(state.objective_trace[-1]),
            "gamma_min": float(state.gammas.min()),
            "gamma_max": float(state.gammas.max()),
        },
    )
    return 0


def _cmd_analyze(args) -> int:
    manifest = _Manifest(args.out_dir)
    if args.what == "theorem":
        seed = args.seed if args.seed is not None else 0
        entry = manifest.begin(
            "analyze-theorem",
            _config_hash(None, {"points": args.points, "seed": seed}),
            [seed],
        )
        points = theorem_scan(
            n_points=args.points,
            seed=seed,
            out_of_regime_points=max(args.points // 20, 1),
        )
        out_path = os.path.join(args.out_dir, "theorem_scan.csv")
        write_theorem_csv(points, out_path)
        worst = max(pt.rel_err for pt in points if pt.in_regime)
        manifest.end(
            entry,
            [out_path],
            {"rows": len(points), "worst_in_regime_rel_err": worst},
        )
        return 0 if worst < 0.05 else 1

    # tau-sweep
    if not args.config:
        raise ConfigError("analyze tau-sweep requires --config")
    if not args.dataset:
        raise ConfigError("analyze tau-sweep requires --dataset")
    if not args.taus:
        raise ConfigError("analyze tau-sweep requires --taus")
    cfg = load_config(args.config)
    base = build_train_config(cfg, seed_override=args.seed)
    train_ds = load_dataset(args.dataset, split="train")
    heldout_path = args.heldout
    if heldout_path is None:
        stem, ext = os.path.splitext(args.dataset)
        candidate = stem + ".heldout" + ext
        if not os.path.exists(candidate):
            raise ConfigError("analyze tau-sweep requires --heldout or a sibling heldout file")
        heldout_path = candidate
    heldout_ds = load_dataset(heldout_path, split="heldout")
    taus = [float(t) for t in args.taus.split(",") if t.strip()]
    seeds = _parse_seeds(args.seeds) if args.seeds else [base.seed]
    entry = manifest.begin(
        "analyze-tau-sweep",
        _config_hash(args.config, {"taus": args.taus, "seeds": args.seeds}),
        seeds,
    )
    rows = tau_sweep(train_ds, heldout_ds, base, taus, seeds=seeds)
    out_path = os.path.join(args.out_dir, "tau_sweep.csv")
    write_tau_sweep_csv(rows, out_path)
    manifest.end(entry, [out_path], {"rows": len(rows)})
    return 0


# -------------------------------------------------------------------- parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marginpo",
        description="Preference optimization with dynamic per-pair target margins.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (key = value lines)")
    common.add_argument("--out-dir", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="seed override")
    common.add_argument("--jobs", type=int, default=1, help="parallel runs for seed sweeps")

    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="write a synthetic dataset")

    p_train = sub.add_parser("train", parents=[common], help="train a policy")
    p_train.add_argument("--dataset", required=True, help="train dataset JSON path")
    p_train.add_argument("--heldout", help="heldout dataset JSON path")
    p_train.add_argument("--seeds", help="seed sweep: '0..9' or '0,3,7'")

    p_solve = sub.add_parser("solve", parents=[common], help="run the margin solver")
    p_solve.add_argument("--margins", required=True, help="one-column CSV of margins")
    p_solve.add_argument("--gamma0", type=float, default=0.4)
    p_solve.add_argument("--tau", type=float, default=1.0)
    p_solve.add_argument("--eta", type=float, default=None)
    p_solve.add_argument("--iterations", type=int, default=20)

    p_analyze = sub.add_parser("analyze", parents=[common], help="analysis scans")
    p_analyze.add_argument("what", choices=["theorem", "tau-sweep"])
    p_analyze.add_argument("--points", type=int, default=10_000)
    p_analyze.add_argument("--dataset", help="train dataset (tau-sweep)")
    p_analyze.add_argument("--heldout", help="heldout dataset (tau-sweep)")
    p_analyze.add_argument("--taus", help="comma-separated tau grid (tau-sweep)")
    p_analyze.add_argument("--seeds", help="seed list for tau-sweep")
    return parser


_DISPATCH = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "solve": _cmd_solve,
    "analyze": _cmd_analyze,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        return _DISPATCH[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
