"""Command-line interface.

    scsd train --config cfg --data DIR --out RUNDIR
    scsd eval --checkpoint F --data DIR --out report.json [--weight-mode M]
    scsd data simulate --view-missing R --label-missing R --seed S --in DIR --out DIR
    scsd data synth --out DIR [--n N --c C --m M --seed S]
    scsd ablate --variant no_vq --config cfg --data DIR --out DIR [--seeds 0,1,2]
    scsd sweep --axis view_missing --values 0.1,0.3,0.5 --config cfg --data DIR --out DIR
    scsd inspect correlations --checkpoint F --data DIR --out DIR
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fusion as fus_mod
from . import trainer
from .checkpoint import load_checkpoint
from .data import (MissingnessSpec, dataset_checksums, load_dataset,
                   save_dataset, simulate_missing_labels, simulate_missing_views)
from .synthetic import make_synthetic_dataset


def _load_config(path, **overrides) -> trainer.TrainConfig:
    if path is None:
        return trainer.TrainConfig(**overrides)
    return trainer.parse_config(Path(path).read_text(encoding="utf-8"), **overrides)


def _cmd_train(args):
    cfg = _load_config(args.config)
    ds = load_dataset(args.data)
    if args.no_protocol:
        val = load_dataset(args.val_data) if args.val_data else None
        ckpt, report = trainer.train(cfg, ds, val)
        if val is not None:
            report.final_metrics = trainer.evaluate(ckpt, val)
    else:
        ckpt, report = trainer.run_protocol(cfg, ds)
    out = trainer.write_run_dir(args.out, ckpt, report)
    (out / "config.txt").write_text(trainer.format_config(cfg), encoding="utf-8")
    if report.final_metrics is not None:
        print(json.dumps(report.final_metrics.as_dict(), indent=2))
    print(f"run artifacts written to {out}")


def _cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    metrics = trainer.evaluate(ckpt, ds, weight_mode=args.weight_mode)
    payload = metrics.as_dict()
    Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    print(json.dumps(payload, indent=2))


def _cmd_data_simulate(args):
    ds = load_dataset(getattr(args, "in"))
    if args.view_missing > 0:
        ds = simulate_missing_views(ds, MissingnessSpec(
            view_missing_rate=args.view_missing, seed=args.seed))
    if args.label_missing > 0:
        ds = simulate_missing_labels(ds, MissingnessSpec(
            label_missing_rate=args.label_missing, seed=args.seed + 1))
    save_dataset(ds, args.out)
    sums = dataset_checksums(args.out)
    sums.pop("checksums.json", None)  # stale copy when overwriting a directory
    (Path(args.out) / "checksums.json").write_text(
        json.dumps(sums, indent=2) + "\n", encoding="utf-8")
    print(f"simulated dataset written to {args.out}")


def _cmd_data_synth(args):
    ds = make_synthetic_dataset(n=args.n, c=args.c, m=args.m, seed=args.seed)
    save_dataset(ds, args.out)
    print(f"synthetic dataset written to {args.out}")


def _cmd_ablate(args):
    cfg = _load_config(args.config)
    ds = load_dataset(args.data)
    all_variants = trainer.ablation_variants()
    if args.variant == "all":
        variants = all_variants
    elif args.variant in all_variants:
        variants = {args.variant: all_variants[args.variant]}
    else:
        raise SystemExit(f"unknown variant {args.variant!r}; "
                         f"choose from {', '.join(all_variants)} or all")
    seeds = [int(s) for s in args.seeds.split(",")]
    table = trainer.run_experiment_suite(cfg, ds, variants, seeds)
    _write_suite(args.out, table)


def _cmd_sweep(args):
    cfg = _load_config(args.config)
    ds = load_dataset(args.data)
    values = [float(v) for v in args.values.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    table = trainer.run_sweep(cfg, ds, args.axis, values, seeds)
    _write_suite(args.out, table)


def _write_suite(out_dir, table):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "suite.json").write_text(json.dumps(table, indent=2), encoding="utf-8")
    names = [k for k in next(iter(table.values())) if k.endswith("_mean")]
    lines = ["variant," + ",".join(n[:-5] for n in names)
             + "," + ",".join(n[:-5] + "_std" for n in names)]
    for variant, entry in table.items():
        if not entry.get("runs"):
            lines.append(f"{variant},failed")
            continue
        means = ",".join(f"{entry[n]:.6f}" for n in names)
        stds = ",".join(f"{entry[n[:-5] + '_std']:.6f}" for n in names)
        lines.append(f"{variant},{means},{stds}")
    (out / "suite.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print((out / "suite.csv").read_text(encoding="utf-8"))


def _cmd_inspect_correlations(args):
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    model, fus, cfg = trainer.model_from_checkpoint(*ckpt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "s_global.csv", fus.s_global, delimiter=",")
    np.savetxt(out / "s_global_normalized.csv", fus.s_norm, delimiter=",")
    # per-view batch correlations over the whole given dataset
    scores = trainer.predict(model, fus, ds, cfg)
    from .data import iterate_batches
    from . import network as net
    batch = next(iterate_batches(ds, ds.n))
    state = net.forward_pass(model, batch, with_reconstruction=False)
    for v, p in enumerate(state.p_full):
        s_v = fus_mod.batch_prediction_correlation(p.values, ds.view_mask[:, v])
        np.savetxt(out / f"s_view_{v}.csv",
                   fus_mod.normalize_correlation(s_v), delimiter=",")
    if fus.q_ema is not None:
        np.savetxt(out / "q_ema.csv", fus.q_ema[None, :], delimiter=",")
    if args.run:
        report = json.loads((Path(args.run) / "report.json").read_text(encoding="utf-8"))
        rows = ["epoch," + ",".join(f"q_view{v}" for v in range(model.m))]
        for i, q in enumerate(report.get("q_history", []), start=1):
            rows.append(f"{i}," + ("," * (model.m - 1) if q is None
                                   else ",".join(f"{x:.10g}" for x in q)))
        (out / "q_history.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    np.savetxt(out / "fused_scores.csv", scores, delimiter=",")
    print(f"correlation matrices written to {out}")


def build_parser():
    parser = argparse.ArgumentParser(prog="scsd")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--val-data", default=None)
    p.add_argument("--no-protocol", action="store_true",
                   help="treat --data as the ready training set (no split/missingness)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weight-mode", default=None,
                   choices=["frozen_ema", "per_batch"])
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("data", help="dataset tools")
    data_sub = p.add_subparsers(dest="data_command", required=True)
    q = data_sub.add_parser("simulate", help="apply missingness to a dataset")
    q.add_argument("--view-missing", type=float, default=0.0)
    q.add_argument("--label-missing", type=float, default=0.0)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--in", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_data_simulate)
    q = data_sub.add_parser("synth", help="generate the synthetic benchmark")
    q.add_argument("--out", required=True)
    q.add_argument("--n", type=int, default=2000)
    q.add_argument("--c", type=int, default=8)
    q.add_argument("--m", type=int, default=2)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=_cmd_data_synth)

    p = sub.add_parser("ablate", help="run ablation variants")
    p.add_argument("--variant", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("sweep", help="missingness / train-ratio sweeps")
    p.add_argument("--axis", required=True,
                   choices=["view_missing", "label_missing", "train_fraction"])
    p.add_argument("--values", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("inspect", help="inspect model internals")
    ins_sub = p.add_subparsers(dest="inspect_command", required=True)
    q = ins_sub.add_parser("correlations", help="emit correlation matrices as CSV")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--run", default=None,
                   help="run directory whose report.json holds the q history")
    q.set_defaults(func=_cmd_inspect_correlations)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
