"""End-to-end orchestration: config file -> data -> Phase I -> Phase II -> report.

A run is fully described by one JSON config (data source, PRM and Phase-II
hyperparameters, split fractions, seeds, ablation flags). Per seed the
pipeline generates or loads data, splits it, fits the normalizer on the
labeled training split only, trains the plain model, pseudo-labels the
unlabeled pool, trains Phase II and evaluates on the held-out test split.
Every artifact lands under output_root/run-<config hash>/.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .baseline import SupervisedMlp, train_supervised
from .data import (
    DataError,
    Dataset,
    DatasetSchema,
    Normalizer,
    SynthConfig,
    apply_normalizer,
    default_schema,
    fit_normalizer,
    generate_synthetic,
    load_csv,
    save_csv,
    stratified_split,
)
from .metrics import MetricsReport, aggregate_runs, classification_report, confusion_matrix
from .persist import save_assl_model, save_plain_model
from .prm import GbdtConfig, LogregConfig, PlainModel, PrmConfig, pseudo_label, train_prm
from .trainer import AsslConfig, AsslModel, TrainHistory, predict_proba_matrix, train

VARIANTS = ("full", "no_adversarial", "no_semi", "supervised_mlp", "prm_only")

ENV_OUTPUT_ROOT = "ADVSSL_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Raised when a run config cannot be parsed or validated."""


@dataclass
class RunConfig:
    synth: SynthConfig | None = None
    labeled_csv: str | None = None
    unlabeled_csv: str | None = None
    schema: DatasetSchema | None = None  # for CSV sources; synth builds its own
    prm: PrmConfig = field(default_factory=PrmConfig)
    assl: AsslConfig = field(default_factory=AsslConfig)
    split: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seeds: tuple[int, ...] = (0,)
    output_dir: str | None = None
    variant: str = "full"

    def __post_init__(self):
        has_synth = self.synth is not None
        has_csv = self.labeled_csv is not None
        if has_synth == has_csv:
            raise ConfigError("config needs exactly one data source (synth or labeled_csv)")
        if len(self.seeds) < 1:
            raise ConfigError("need at least one seed")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            data = raw.get("data", {})
            synth = SynthConfig.from_dict(data["synth"]) if "synth" in data else None
            schema = None
            if "schema" in raw:
                schema = DatasetSchema.from_dict(raw["schema"])
            prm_raw = raw.get("prm", {})
            prm = PrmConfig(
                variant=prm_raw.get("variant", "gbdt"),
                gbdt=GbdtConfig(**prm_raw.get("gbdt", {})),
                logreg=LogregConfig(**prm_raw.get("logreg", {})),
            )
            assl = AsslConfig.from_dict(raw.get("assl", {}))
            ablation = raw.get("ablation", {})
            flags = [
                name
                for name in ("baseline_supervised_only", "no_adversarial", "no_semi")
                if ablation.get(name)
            ]
            if len(flags) > 1:
                raise ConfigError(f"at most one ablation flag may be set, got {flags}")
            variant = raw.get("variant", "full")
            if flags == ["baseline_supervised_only"]:
                variant = "supervised_mlp"
            elif flags == ["no_adversarial"]:
                variant = "no_adversarial"
            elif flags == ["no_semi"]:
                variant = "no_semi"
            return cls(
                synth=synth,
                labeled_csv=data.get("labeled_csv"),
                unlabeled_csv=data.get("unlabeled_csv"),
                schema=schema,
                prm=prm,
                assl=assl,
                split=tuple(raw.get("split", (0.7, 0.15, 0.15))),
                seeds=tuple(int(s) for s in raw.get("seeds", (0,))),
                output_dir=raw.get("output_dir"),
                variant=variant,
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    def to_dict(self) -> dict:
        out: dict = {
            "data": {},
            "prm": {
                "variant": self.prm.variant,
                "gbdt": asdict(self.prm.gbdt),
                "logreg": asdict(self.prm.logreg),
            },
            "assl": self.assl.to_dict(),
            "split": list(self.split),
            "seeds": list(self.seeds),
            "variant": self.variant,
        }
        if self.synth is not None:
            out["data"]["synth"] = self.synth.to_dict()
        else:
            out["data"]["labeled_csv"] = self.labeled_csv
            out["data"]["unlabeled_csv"] = self.unlabeled_csv
        if self.schema is not None:
            out["schema"] = self.schema.to_dict()
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        return out

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {os.path.basename(str(path))}: {exc.strerror}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return RunConfig.from_dict(raw)


def resolve_output_root(cfg: RunConfig, override: str | None = None) -> str:
    if override:
        return override
    if cfg.output_dir:
        return cfg.output_dir
    return os.environ.get(ENV_OUTPUT_ROOT, "runs")


@dataclass
class PreparedSeed:
    """Everything one seed's variants share: splits, normalizer, PRM, pseudo pool."""

    seed: int
    schema: DatasetSchema
    normalizer: Normalizer
    train: Dataset  # normalized
    val: Dataset
    test: Dataset
    test_raw: Dataset  # pre-normalization rows for the round-trip CSV
    pseudo: object  # PseudoLabeledDataset
    prm_model: PlainModel
    assl_cfg: AsslConfig


def _load_source(cfg: RunConfig, seed: int) -> tuple[Dataset, Dataset | None]:
    if cfg.synth is not None:
        synth = SynthConfig(**{**cfg.synth.to_dict(), "seed": seed})
        labeled, unlabeled, _ = generate_synthetic(synth)
        return labeled, unlabeled
    schema = cfg.schema or default_schema()
    labeled = load_csv(cfg.labeled_csv, schema)
    if not labeled.is_labeled:
        raise DataError(f"{os.path.basename(cfg.labeled_csv)} has no rating column")
    unlabeled = None
    if cfg.unlabeled_csv:
        unlabeled = load_csv(cfg.unlabeled_csv, schema)
        if unlabeled.is_labeled:
            unlabeled = Dataset(schema, unlabeled.rows, None)
    return labeled, unlabeled


def prepare_seed(cfg: RunConfig, seed: int) -> PreparedSeed:
    labeled, unlabeled = _load_source(cfg, seed)
    train_raw, val_raw, test_raw = stratified_split(labeled, cfg.split, seed)
    if len(train_raw) == 0 or len(val_raw) == 0 or len(test_raw) == 0:
        raise DataError("a split came out empty; adjust fractions or dataset size")
    normalizer = fit_normalizer(train_raw)
    train = apply_normalizer(normalizer, train_raw)
    val = apply_normalizer(normalizer, val_raw)
    test = apply_normalizer(normalizer, test_raw)
    prm_cfg = cfg.prm
    prm_model = train_prm(train, prm_cfg, seed=seed)
    if unlabeled is not None and len(unlabeled) > 0:
        pseudo = pseudo_label(prm_model, apply_normalizer(normalizer, unlabeled))
    else:
        pseudo = pseudo_label(prm_model, Dataset(labeled.schema, np.empty((0, labeled.schema.num_features)), None))
    assl_cfg = AsslConfig.from_dict({**cfg.assl.to_dict(), "seed": seed})
    return PreparedSeed(
        seed=seed,
        schema=labeled.schema,
        normalizer=normalizer,
        train=train,
        val=val,
        test=test,
        test_raw=test_raw,
        pseudo=pseudo,
        prm_model=prm_model,
        assl_cfg=assl_cfg,
    )


def variant_config(base: AsslConfig, variant: str) -> AsslConfig:
    d = base.to_dict()
    if variant == "no_adversarial":
        d["alpha"] = 0.0
    elif variant == "no_semi":
        d["lambda_u"] = 0.0
        d["suppress_pseudo"] = True
    return AsslConfig.from_dict(d)


@dataclass
class SeedResult:
    seed: int
    variant: str
    report: MetricsReport
    predictions: np.ndarray
    probabilities: np.ndarray
    model: AsslModel | SupervisedMlp | PlainModel
    history: TrainHistory | None
    pseudo_count: int
    pseudo_mean_confidence: float

    def report_payload(self) -> dict:
        return {
            "seed": self.seed,
            "variant": self.variant,
            "metrics": self.report.to_dict(),
            "test_rows": int(self.predictions.shape[0]),
            "pseudo_count": self.pseudo_count,
            "pseudo_mean_confidence": self.pseudo_mean_confidence,
        }


def run_variant(prep: PreparedSeed, variant: str) -> SeedResult:
    """Train one variant on an already-prepared seed and evaluate on test."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    cfg = variant_config(prep.assl_cfg, variant)
    history: TrainHistory | None = None
    if variant == "prm_only":
        model = prep.prm_model
        probs = model.predict_proba_matrix(prep.test.rows)
    elif variant == "supervised_mlp":
        model, history = train_supervised(prep.train, prep.val, cfg)
        probs = model.predict_proba_matrix(prep.test.rows)
    else:
        if len(prep.pseudo) == 0 and not cfg.suppress_pseudo:
            raise DataError("no unlabeled rows to pseudo-label; cannot train phase II")
        pseudo = None if cfg.suppress_pseudo else prep.pseudo
        model, history = train(prep.train, pseudo, prep.val, cfg)
        probs = predict_proba_matrix(model, prep.test.rows, cfg.inference_head)
    preds = probs.argmax(axis=1)
    report = classification_report(
        confusion_matrix(prep.test.labels, preds, prep.schema.num_classes)
    )
    conf = prep.pseudo.confidences
    return SeedResult(
        seed=prep.seed,
        variant=variant,
        report=report,
        predictions=preds,
        probabilities=probs,
        model=model,
        history=history,
        pseudo_count=len(prep.pseudo),
        pseudo_mean_confidence=float(conf.mean()) if conf.size else 0.0,
    )


def write_predictions_csv(path, schema: DatasetSchema, preds: np.ndarray, probs: np.ndarray):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["predicted_rating"] + [f"p_{name}" for name in schema.label_names])
        for i in range(preds.shape[0]):
            writer.writerow(
                [schema.label_names[preds[i]]] + [repr(float(v)) for v in probs[i]]
            )


def write_seed_artifacts(seed_dir: str, prep: PreparedSeed, result: SeedResult) -> dict:
    """Persist one seed's models, history, report and round-trip CSVs."""
    os.makedirs(seed_dir, exist_ok=True)
    paths = {}

    prm_path = os.path.join(seed_dir, "prm_model.json")
    save_plain_model(prm_path, prep.prm_model, prep.schema, prep.normalizer)
    paths["prm_model"] = prm_path

    if isinstance(result.model, AsslModel):
        model_path = os.path.join(seed_dir, "model.json")
        save_assl_model(
            model_path,
            result.model,
            variant_config(prep.assl_cfg, result.variant),
            prep.schema,
            prep.normalizer,
        )
        paths["model"] = model_path
    if result.history is not None:
        history_path = os.path.join(seed_dir, "history.csv")
        result.history.to_csv(history_path)
        paths["history"] = history_path

    report_json = os.path.join(seed_dir, "report.json")
    with open(report_json, "w", encoding="utf-8") as handle:
        json.dump(result.report_payload(), handle, sort_keys=True, indent=1)
        handle.write("\n")
    paths["report_json"] = report_json
    report_txt = os.path.join(seed_dir, "report.txt")
    with open(report_txt, "w", encoding="utf-8") as handle:
        handle.write(result.report.to_text(prep.schema.label_names) + "\n")
    paths["report_txt"] = report_txt

    test_csv = os.path.join(seed_dir, "test_split.csv")
    save_csv(prep.test_raw, test_csv)
    paths["test_split"] = test_csv
    pred_csv = os.path.join(seed_dir, "predictions.csv")
    write_predictions_csv(pred_csv, prep.schema, result.predictions, result.probabilities)
    paths["predictions"] = pred_csv
    return paths


def _write_manifest(run_dir: str, payload: dict) -> str:
    path = os.path.join(run_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=1)
        handle.write("\n")
    return path


def execute_run(cfg: RunConfig, output_root: str) -> dict:
    """cmd_run body: one variant (per config) across all seeds, plus aggregate."""
    run_dir = os.path.join(output_root, f"run-{cfg.config_hash()}")
    os.makedirs(run_dir, exist_ok=True)
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "status": "running",
        "artifacts": {},
        "timings_sec": {},
    }
    _write_manifest(run_dir, manifest)

    reports = []
    t0 = time.monotonic()
    for seed in cfg.seeds:
        t_seed = time.monotonic()
        prep = prepare_seed(cfg, seed)
        result = run_variant(prep, cfg.variant)
        seed_dir = os.path.join(run_dir, f"seed_{seed}")
        manifest["artifacts"][f"seed_{seed}"] = write_seed_artifacts(seed_dir, prep, result)
        manifest["timings_sec"][f"seed_{seed}"] = round(time.monotonic() - t_seed, 3)
        reports.append(result.report)
    if len(reports) >= 2:
        agg_path = os.path.join(run_dir, "aggregate.json")
        with open(agg_path, "w", encoding="utf-8") as handle:
            json.dump(aggregate_runs(reports), handle, sort_keys=True, indent=1)
            handle.write("\n")
        manifest["artifacts"]["aggregate"] = agg_path
    manifest["timings_sec"]["total"] = round(time.monotonic() - t0, 3)
    manifest["status"] = "complete"
    _write_manifest(run_dir, manifest)
    return {"run_dir": run_dir, "reports": reports}


ABLATION_VARIANTS = ("prm_only", "supervised_mlp", "no_adversarial", "full")


def execute_ablation(cfg: RunConfig, output_root: str) -> dict:
    """cmd_ablate body: all ablation variants on identical data and seeds."""
    run_dir = os.path.join(output_root, f"ablate-{cfg.config_hash()}")
    os.makedirs(run_dir, exist_ok=True)
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "status": "running",
        "artifacts": {},
        "timings_sec": {},
    }
    _write_manifest(run_dir, manifest)

    rows = []
    by_variant: dict[str, list[MetricsReport]] = {v: [] for v in ABLATION_VARIANTS}
    t0 = time.monotonic()
    for seed in cfg.seeds:
        prep = prepare_seed(cfg, seed)
        for variant in ABLATION_VARIANTS:
            result = run_variant(prep, variant)
            seed_dir = os.path.join(run_dir, f"seed_{seed}", variant)
            manifest["artifacts"][f"seed_{seed}/{variant}"] = write_seed_artifacts(
                seed_dir, prep, result
            )
            by_variant[variant].append(result.report)
            rows.append(
                {
                    "variant": variant,
                    "seed": seed,
                    "macro_f1": result.report.macro_f1,
                    "macro_precision": result.report.macro_precision,
                    "macro_recall": result.report.macro_recall,
                    "accuracy": result.report.accuracy,
                }
            )
    summary = {}
    for variant, reps in by_variant.items():
        if len(reps) >= 2:
            summary[variant] = aggregate_runs(reps)
        else:
            summary[variant] = {
                "macro_f1": {"mean": reps[0].macro_f1, "std": 0.0},
                "accuracy": {"mean": reps[0].accuracy, "std": 0.0},
                "runs": 1,
            }
    table_path = os.path.join(run_dir, "ablation.json")
    with open(table_path, "w", encoding="utf-8") as handle:
        json.dump({"rows": rows, "summary": summary}, handle, sort_keys=True, indent=1)
        handle.write("\n")
    text_path = os.path.join(run_dir, "ablation.txt")
    with open(text_path, "w", encoding="utf-8") as handle:
        handle.write(format_ablation_table(rows, summary) + "\n")
    manifest["artifacts"]["ablation_json"] = table_path
    manifest["artifacts"]["ablation_txt"] = text_path
    manifest["timings_sec"]["total"] = round(time.monotonic() - t0, 3)
    manifest["status"] = "complete"
    _write_manifest(run_dir, manifest)
    return {"run_dir": run_dir, "rows": rows, "summary": summary}


def format_ablation_table(rows: list[dict], summary: dict) -> str:
    lines = [f"{'variant':<18} {'seed':>6} {'macro_f1':>9} {'accuracy':>9}"]
    for row in rows:
        lines.append(
            f"{row['variant']:<18} {row['seed']:>6} {row['macro_f1']:>9.4f} "
            f"{row['accuracy']:>9.4f}"
        )
    lines.append("-" * 45)
    for variant, agg in summary.items():
        f1 = agg["macro_f1"]
        acc = agg["accuracy"]
        lines.append(
            f"{variant:<18} {'mean':>6} {f1['mean']:>9.4f} {acc['mean']:>9.4f}"
            f"   (f1 std {f1['std']:.4f}, n={agg['runs']})"
        )
    return "\n".join(lines)
