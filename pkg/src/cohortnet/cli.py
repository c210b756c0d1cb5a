"""Command-line entry points.

Subcommands: ingest, train, synth, growprune, eval, ablate, count, kb,
serve, bench.  Options that several commands share (``--data``, ``--seed``,
``--config``) behave identically everywhere; config files are plain
``key = value`` text.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import archive, benchmarks, demo, densities, experiments, metrics, server
from .backends import backend_name
from .datapipe import DatasetBundle, FeatureDataset
from .features import COHORTS, FeatureSpec
from .growprune import GrowPruneConfig
from .knowledge import fit_kb, load_kb, save_kb
from .metrics import evaluate
from .network import MaskedNetwork, init_network


def _load_net(path: str) -> MaskedNetwork:
    return MaskedNetwork.from_bytes(Path(path).read_bytes())


def _save_net(net: MaskedNetwork, path: Path) -> None:
    path.write_bytes(net.to_bytes())


def _load_configs(args) -> tuple[experiments.ExperimentConfig, GrowPruneConfig]:
    options = experiments.parse_config_file(args.config) if args.config else {}
    cfg = experiments.experiment_config_from(options)
    gp = experiments.growprune_config_from(options)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
        gp = replace(gp, seed=args.seed)
    if getattr(args, "generator", None):
        cfg = replace(cfg, generator=args.generator)
    return cfg, gp


def _print_report(tag: str, report: metrics.EvalReport) -> None:
    print(f"{tag}: acc={report.accuracy:.4f} fpr={report.fpr:.4f} "
          f"fnr2={report.fnr2:.4f} fnr3={report.fnr3:.4f} f1={report.macro_f1:.4f} "
          f"params={report.params} flops={report.flops}")


def cmd_ingest(args) -> None:
    subjects = archive.read_raw_root(args.raw)
    fractions = tuple(float(f) for f in args.split.split(","))
    bundle = archive.build_bundle(subjects, window_seconds=args.window_seconds,
                                  rate_hz=args.rate_hz, fractions=fractions,
                                  seed=args.seed)
    if args.features:
        spec = FeatureSpec.parse(args.features,
                                 samples_per_window=bundle.spec.samples_per_window)
        bundle = bundle.select(spec)
    archive.save_bundle(bundle, args.out)
    sizes = {name: bundle._partitions[name].n_rows for name in ("train", "validation", "test")}
    print(f"wrote {args.out}: width={bundle.spec.total_width} rows={sizes}")


def cmd_train(args) -> None:
    bundle = archive.load_bundle(args.data)
    cfg, gp = _load_configs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.model == 1:
        net, report = experiments.run_model1(bundle, cfg)
        trace = None
    elif args.model == 2:
        net, report = experiments.run_model2(bundle, cfg)
        trace = None
    else:
        model2, m2_report = experiments.run_model2(bundle, cfg)
        _print_report("model2 (validation)", m2_report)
        _save_net(model2, out / "model2.bin")
        net, report, trace = experiments.run_model3(bundle, model2, cfg, gp)
    model_path = out / f"model{args.model}.bin"
    _save_net(net, model_path)
    if trace is not None:
        trace.write_csv(out / "model3_trace.csv")
    _print_report(f"model{args.model} (validation)", report)
    if args.test:
        bundle.unlock_test()
        _print_report(f"model{args.model} (test)", evaluate(net, bundle.test))
    print(f"wrote {model_path}")


def cmd_synth(args) -> None:
    bundle = archive.load_bundle(args.data)
    cfg, _ = _load_configs(args)
    cfg = replace(cfg, synth_size=args.n)
    synthetic, _, kb = experiments.make_synthetic(bundle, cfg)
    spec = bundle.spec
    empty = FeatureDataset(np.empty((0, spec.total_width)), np.empty(0, dtype=np.int64),
                           np.empty(0, dtype=object), spec)
    synth_bundle = DatasetBundle(spec, bundle.scaler, {
        "train": FeatureDataset(synthetic.matrix, synthetic.labels,
                                np.array(["SYN"] * len(synthetic.labels), dtype=object),
                                spec),
        "validation": empty,
        "test": empty,
    })
    archive.save_bundle(synth_bundle, args.out)
    if args.kb_out:
        save_kb(kb, args.kb_out)
    counts = np.bincount(synthetic.labels, minlength=len(COHORTS))
    print(f"wrote {args.out}: {len(synthetic.labels)} rows from generator "
          f"{synthetic.generator_kind} (seed {synthetic.seed}), "
          f"label counts {dict(zip(COHORTS, counts.tolist()))}")


def cmd_growprune(args) -> None:
    bundle = archive.load_bundle(args.data)
    cfg, gp = _load_configs(args)
    model2 = _load_net(args.model2)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net, report, trace = experiments.run_model3(bundle, model2, cfg, gp)
    _save_net(net, out / "model3.bin")
    trace.write_csv(out / "model3_trace.csv")
    _print_report("model3 (validation)", report)
    print(f"wrote {out / 'model3.bin'} and {out / 'model3_trace.csv'}")


def cmd_eval(args) -> None:
    bundle = archive.load_bundle(args.data)
    net = _load_net(args.model)
    if args.partition == "test":
        bundle.unlock_test()
    report = evaluate(net, bundle.partition(args.partition))
    _print_report(f"{args.model} on {args.partition}", report)


def cmd_ablate(args) -> None:
    bundle = archive.load_bundle(args.data)
    cfg, gp = _load_configs(args)
    models = tuple(int(m) for m in args.models.split(","))
    if args.subsets:
        subsets = [FeatureSpec.parse(s, bundle.spec.samples_per_window)
                   for s in args.subsets.split(";")]
        plan = experiments.ExperimentPlan(subsets, cfg, models,
                                          gp if 3 in models else None, args.out)
    else:
        plan = experiments.full_ablation_plan(bundle, cfg, models,
                                              gp if 3 in models else None, args.out)
    path = experiments.run_ablation(bundle, plan)
    print(f"wrote {path} ({len(plan.feature_subsets)} rows)")


def cmd_count(args) -> None:
    if args.model:
        net = _load_net(args.model)
    else:
        widths = tuple(int(w) for w in args.spec.split(","))
        net = init_network(widths, seed=0)
    print(f"params={net.count_params()} flops={net.count_flops()} "
          f"widths={','.join(str(w) for w in net.widths)}")


def cmd_kb(args) -> None:
    if args.action != "rules":
        raise SystemExit(f"unknown kb action {args.action!r}")
    if args.kb:
        kb = load_kb(args.kb)
        names = None
    else:
        if not args.data:
            raise SystemExit("kb rules needs --data or --kb")
        bundle = archive.load_bundle(args.data)
        tr = bundle.train
        kb = fit_kb(tr.matrix, tr.labels, kind="tree", max_depth=args.max_depth,
                    seed=args.seed or 0, n_classes=len(COHORTS))
        names = bundle.spec.column_names()
    for line in kb.render_rules(feature_names=names):
        print(line)


def cmd_serve(args) -> None:
    bundle = archive.load_bundle(args.data)
    net = _load_net(args.model)
    httpd = server.build_server(net, bundle.spec, bundle.scaler,
                                host=args.host, port=args.port)
    print(f"serving on http://{args.host}:{httpd.server_address[1]} "
          f"(backend: {backend_name()})")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass


def cmd_bench(args) -> None:
    benchmarks.print_benchmark(width=args.width, n_rows=args.rows,
                               batch_size=args.batch_size, epochs=args.epochs)


def cmd_demo(args) -> None:
    demo.main(["--out", args.out, "--subjects-per-cohort", str(args.subjects_per_cohort),
               "--windows-per-subject", str(args.windows_per_subject),
               "--seed", str(args.seed)])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cohortnet")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="raw subject directories -> dataset archive")
    p.add_argument("--raw", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window-seconds", type=int, default=15)
    p.add_argument("--rate-hz", type=int, default=4)
    p.add_argument("--split", default="0.6,0.2,0.2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", default=None, help="e.g. GSR,OX,BP,Q (default: all)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train model 1, 2 or 3 on an archive")
    p.add_argument("--data", required=True)
    p.add_argument("--model", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--generator", choices=("mnd", "gmm", "kde"), default=None)
    p.add_argument("--test", action="store_true",
                   help="also run the one final test evaluation")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="sample a labeled synthetic dataset archive")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--generator", choices=("mnd", "gmm", "kde"), default="gmm")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--kb-out", default=None, help="also save the fitted knowledge base")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("growprune", help="grow-and-prune synthesis from a model-2 file")
    p.add_argument("--model2", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_growprune)

    p = sub.add_parser("eval", help="evaluate a model file on a partition")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--partition", choices=("train", "validation", "test"),
                   default="validation")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="feature-subset ablation table")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--models", default="1,2")
    p.add_argument("--subsets", default=None,
                   help="semicolon-separated, e.g. 'GSR+Q;GSR+OX+BP+Q' (default: all 63)")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("count", help="print params and FLOPs")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", default=None)
    g.add_argument("--spec", default=None, help="dense widths, e.g. 74,256,128,128,3")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("kb", help="knowledge-base utilities")
    p.add_argument("action", choices=("rules",))
    p.add_argument("--data", default=None)
    p.add_argument("--kb", default=None, help="load a saved knowledge base instead")
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_kb)

    p = sub.add_parser("serve", help="JSON inference endpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="archive providing spec and scaler")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="compare the numpy and compiled backends")
    p.add_argument("--width", type=int, default=194)
    p.add_argument("--rows", type=int, default=2048)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("demo", help="generate a synthetic raw dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects-per-cohort", type=int, default=20)
    p.add_argument("--windows-per-subject", type=int, default=16)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main(sys.argv[1:])
