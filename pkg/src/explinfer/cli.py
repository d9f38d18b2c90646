"""Command-line entry points.

Subcommands:
    train       builder stages only; saves the target model and baseline
    explain     compute and dump explanations for the aux and eval splits
    attack      run the attacks of one config and emit the report files
    audit       correlation audit (sensitive attribute vs observables)
    serve       expose the target model through the blackbox HTTP API
    experiment  full matrix run: attacks + audit + report emission

Every subcommand takes a JSON experiment config; common flags override the
config's output_dir, transport and seeds. Exit code 0 on success, 2 on a
pipeline failure (the offending stage is named in the diagnostic).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import explain as explain_mod
from . import nn, pipeline, service
from .pipeline import ExperimentConfig, PipelineError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="path to the experiment config JSON")
    parser.add_argument("--out-dir", help="override output_dir")
    parser.add_argument("--transport",
                        help="'in_process' or the base URL of a running service")
    parser.add_argument("--split-seed", type=int)
    parser.add_argument("--model-seed", type=int)
    parser.add_argument("--attack-seed", type=int)
    parser.add_argument("--explainer-seed", type=int)


def _load_cells(args) -> list[ExperimentConfig]:
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    overrides = {
        "output_dir": args.out_dir,
        "transport": args.transport,
        "split_seed": args.split_seed,
        "model_seed": args.model_seed,
        "attack_seed": args.attack_seed,
        "explainer_seed": args.explainer_seed,
    }
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    return pipeline.expand_matrix(raw)


def _cmd_train(args) -> int:
    for cfg in _load_cells(args):
        prep = pipeline.prepare(cfg)
        os.makedirs(cfg.output_dir, exist_ok=True)
        model_path = os.path.join(cfg.output_dir, f"target-{cfg.tm.value}.npz")
        nn.save_model(prep.model, model_path)
        baseline_path = os.path.join(cfg.output_dir, f"baseline-{cfg.tm.value}.csv")
        with open(baseline_path, "w", encoding="utf-8") as fh:
            fh.write(",".join(repr(float(v)) for v in prep.baseline) + "\n")
        print(f"{cfg.dataset_name} {cfg.tm.value}: "
              f"test accuracy {prep.test_accuracy:.4f}; "
              f"model -> {model_path}")
    return 0


def _cmd_explain(args) -> int:
    for cfg in _load_cells(args):
        prep = pipeline.prepare(cfg)
        aux_pack, eval_pack = pipeline.compute_explanations(prep)
        os.makedirs(cfg.output_dir, exist_ok=True)
        for name, (attrs, _), ds in (
            ("aux", aux_pack, prep.splits.aux),
            ("eval", eval_pack, prep.splits.eval),
        ):
            path = os.path.join(
                cfg.output_dir,
                f"explanations-{cfg.tm.value}-{cfg.algorithm.value}-{name}.csv")
            explain_mod.write_attributions(path, attrs, ds.row_ids)
            print(f"{len(attrs)} {name} explanations -> {path}")
    return 0


def _cmd_attack(args) -> int:
    cells = _load_cells(args)
    report = pipeline.merge_reports([pipeline.run_experiment(c) for c in cells])
    files = pipeline.emit_report(report, cells[0].output_dir)
    for cell in report.rows:
        print(f"{cell.dataset} {cell.threat_model} {cell.explainer} "
              f"{cell.surface}: P={cell.precision:.3f} R={cell.recall:.3f} "
              f"F1={cell.f1:.3f} (tau*={cell.tau_star:.3f})")
    print(f"report -> {files['report']}")
    return 0


def _cmd_audit(args) -> int:
    cells = _load_cells(args)
    rows = []
    for cfg in cells:
        rows.extend(pipeline.run_correlation_audit(cfg))
    out_dir = cells[0].output_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "correlations.csv")
    lines = [",".join(pipeline.CORRELATION_COLUMNS)]
    for row in rows:
        lines.append(",".join(
            pipeline._fmt(getattr(row, c)) for c in pipeline.CORRELATION_COLUMNS))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    for row in rows:
        print(f"{row.threat_model} {row.explainer} s~{row.group}: "
              f"{row.mean_r:+.3f} +/- {row.std_r:.3f} over {row.n_columns} columns")
    print(f"audit -> {path}")
    return 0


def _cmd_serve(args) -> int:
    cells = _load_cells(args)
    if len(cells) != 1:
        print("serve needs a config describing exactly one cell", file=sys.stderr)
        return 2
    cfg = cells[0]
    prep = pipeline.prepare(cfg)
    print(f"serving {cfg.dataset_name} ({cfg.tm.value}) on "
          f"http://{args.host}:{args.port}", flush=True)
    service.serve(
        prep.model, prep.baseline, cfg.explainer_config,
        host=args.host, port=args.port, target=cfg.scalar_target, block=True)
    return 0


def _cmd_experiment(args) -> int:
    cells = _load_cells(args)
    report = pipeline.merge_reports([pipeline.run_experiment(c) for c in cells])
    files = pipeline.emit_report(report, cells[0].output_dir)
    for cell in report.rows:
        print(f"{cell.dataset} {cell.threat_model} {cell.explainer} "
              f"{cell.surface} [{cell.attack_kind}]: "
              f"P={cell.precision:.3f} R={cell.recall:.3f} F1={cell.f1:.3f} "
              f"base={cell.base_rate:.3f} tau*={cell.tau_star:.3f}")
    print(f"report -> {files['report']}")
    print(f"summary -> {files['summary']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="explinfer",
        description="attribute inference attacks against model explanations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the target model")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("explain", help="dump explanations for aux/eval records")
    _add_common(p)
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("attack", help="train the attack and emit report files")
    _add_common(p)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("audit", help="correlation audit of s vs observables")
    _add_common(p)
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("serve", help="serve predict/explain over HTTP")
    _add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("experiment", help="full experiment matrix")
    _add_common(p)
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error [stage=config] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
