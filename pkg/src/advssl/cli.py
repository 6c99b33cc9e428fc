"""Command-line entry points: run, ablate, predict, synth.

Exit codes: 0 success, 2 config error, 3 data error, 4 training
divergence. Failures print one machine-parsable line to stderr:
`error: code=<n> reason=<text>`.
"""

from __future__ import annotations

import argparse
import os
import sys

from .data import DataError, Dataset, generate_synthetic, load_csv, save_csv
from .pipeline import (
    ConfigError,
    RunConfig,
    execute_ablation,
    execute_run,
    load_config,
    resolve_output_root,
)
from .persist import FORMAT_ASSL, detect_model_format, load_assl_model, load_plain_model
from .trainer import DivergenceError, predict_proba_matrix

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _fail(code: int, reason: str) -> int:
    print(f"error: code={code} reason={reason}", file=sys.stderr)
    return code


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seeds:
        try:
            seeds = tuple(int(s) for s in args.seeds.split(","))
        except ValueError:
            raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}")
        return RunConfig.from_dict({**cfg.to_dict(), "seeds": list(seeds)})
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = execute_run(cfg, resolve_output_root(cfg, args.out))
    print(f"run complete: {out['run_dir']}")
    for seed, report in zip(cfg.seeds, out["reports"]):
        print(f"seed {seed}: macro_f1={report.macro_f1:.4f} accuracy={report.accuracy:.4f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = execute_ablation(cfg, resolve_output_root(cfg, args.out))
    print(f"ablation complete: {out['run_dir']}")
    from .pipeline import format_ablation_table

    print(format_ablation_table(out["rows"], out["summary"]))
    return 0


def cmd_predict(args) -> int:
    fmt = detect_model_format(args.model)
    if fmt == FORMAT_ASSL:
        model, cfg, schema, normalizer = load_assl_model(args.model)

        def proba(rows):
            return predict_proba_matrix(model, rows, cfg.inference_head)

    else:
        model, schema, normalizer = load_plain_model(args.model)
        proba = model.predict_proba_matrix

    ds = load_csv(args.csv, schema)
    if len(ds) == 0:
        return 0
    rows = ds.rows
    if normalizer is not None:
        from .data import apply_normalizer

        rows = apply_normalizer(normalizer, Dataset(schema, rows, None)).rows
    probs = proba(rows)
    preds = probs.argmax(axis=1)
    writer = sys.stdout
    for i in range(preds.shape[0]):
        cells = [schema.label_names[preds[i]]] + [repr(float(v)) for v in probs[i]]
        writer.write(",".join(cells) + "\n")
    return 0


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    if cfg.synth is None:
        raise ConfigError("synth command needs a config with a data.synth section")
    out_root = resolve_output_root(cfg, args.out)
    out_dir = os.path.join(out_root, f"synth-{cfg.config_hash()}")
    os.makedirs(out_dir, exist_ok=True)
    labeled, unlabeled, truth = generate_synthetic(cfg.synth)
    save_csv(labeled, os.path.join(out_dir, "labeled.csv"))
    save_csv(unlabeled, os.path.join(out_dir, "unlabeled.csv"))
    truth_ds = Dataset(labeled.schema, unlabeled.rows, truth)
    save_csv(truth_ds, os.path.join(out_dir, "unlabeled_truth.csv"))
    print(f"synthetic dataset written: {out_dir}")
    print(f"labeled rows: {len(labeled)}, unlabeled rows: {len(unlabeled)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advssl",
        description="Two-phase adversarial semi-supervised training for tabular ratings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full pipeline: data -> phase I -> phase II -> report")
    run.add_argument("--config", required=True, help="JSON run config")
    run.add_argument("--seeds", help="comma-separated seed override")
    run.add_argument("--out", help="output root directory")
    run.set_defaults(fn=cmd_run)

    ablate = sub.add_parser("ablate", help="run all ablation variants on identical data")
    ablate.add_argument("--config", required=True)
    ablate.add_argument("--seeds", help="comma-separated seed override")
    ablate.add_argument("--out", help="output root directory")
    ablate.set_defaults(fn=cmd_ablate)

    predict = sub.add_parser("predict", help="rate rows from a CSV with a saved model")
    predict.add_argument("model", help="model JSON file")
    predict.add_argument("csv", help="input CSV (schema columns, no rating needed)")
    predict.set_defaults(fn=cmd_predict)

    synth = sub.add_parser("synth", help="emit a synthetic dataset to CSV and exit")
    synth.add_argument("--config", required=True)
    synth.add_argument("--out", help="output root directory")
    synth.set_defaults(fn=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (DataError, FileNotFoundError) as exc:
        reason = exc.strerror if isinstance(exc, OSError) and exc.strerror else str(exc)
        if isinstance(exc, OSError) and exc.filename:
            reason = f"{reason}: {os.path.basename(str(exc.filename))}"
        return _fail(EXIT_DATA, reason)
    except DivergenceError as exc:
        return _fail(EXIT_DIVERGED, str(exc))
    except ValueError as exc:
        return _fail(EXIT_DATA, str(exc))


if __name__ == "__main__":
    sys.exit(main())
