"""JSON persistence for models, normalizers and reports.

Floats are serialized with Python's shortest round-trip repr, so every
64-bit value survives save -> load -> save byte-for-byte. Each model file
embeds the schema (plus its hash) and, when given, the fitted normalizer,
making a saved model self-contained for prediction on raw CSV rows.
"""

from __future__ import annotations

import json

import numpy as np

from .data import Dataset, DatasetSchema, Normalizer
from .nnet import DenseLayer, MlpParams
from .prm import GbdtModel, LogregParams, PlainModel
from .trainer import AsslConfig, AsslModel
from .tree import RegressionTree

FORMAT_PLAIN = "advssl/plain-model/1"
FORMAT_ASSL = "advssl/assl-model/1"


def _dump(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=1)
        handle.write("\n")


def _load(path) -> dict:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def mlp_to_dict(mlp: MlpParams) -> list[dict]:
    return [
        {
            "weights": layer.weights.tolist(),
            "bias": layer.bias.tolist(),
            "activation": layer.activation,
        }
        for layer in mlp.layers
    ]


def mlp_from_dict(layers: list[dict]) -> MlpParams:
    return MlpParams(
        [
            DenseLayer(
                np.asarray(d["weights"], dtype=np.float64),
                np.asarray(d["bias"], dtype=np.float64),
                d["activation"],
            )
            for d in layers
        ]
    )


def _schema_block(schema: DatasetSchema) -> dict:
    return {"schema": schema.to_dict(), "schema_hash": schema.schema_hash()}


def _normalizer_block(normalizer: Normalizer | None) -> dict:
    return {"normalizer": None if normalizer is None else normalizer.to_dict()}


def save_plain_model(
    path, model: PlainModel, schema: DatasetSchema, normalizer: Normalizer | None = None
) -> None:
    payload: dict = {
        "format": FORMAT_PLAIN,
        "variant": model.variant,
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
    }
    payload.update(_schema_block(schema))
    payload.update(_normalizer_block(normalizer))
    if model.variant == "logistic_regression":
        payload["logreg"] = {
            "weights": model.logreg.weights.tolist(),
            "bias": model.logreg.bias.tolist(),
        }
    else:
        payload["gbdt"] = {
            "num_classes": model.gbdt.num_classes,
            "shrinkage": model.gbdt.shrinkage,
            "base_score": model.gbdt.base_score.tolist(),
            "trees": [[t.to_dict() for t in rnd] for rnd in model.gbdt.trees],
            "train_loss": list(model.gbdt.train_loss),
        }
    _dump(payload, path)


def load_plain_model(path) -> tuple[PlainModel, DatasetSchema, Normalizer | None]:
    d = _load(path)
    if d.get("format") != FORMAT_PLAIN:
        raise ValueError(f"{path} is not a plain-model file")
    schema = DatasetSchema.from_dict(d["schema"])
    normalizer = None if d["normalizer"] is None else Normalizer.from_dict(d["normalizer"])
    if d["variant"] == "logistic_regression":
        lr = d["logreg"]
        model = PlainModel(
            variant="logistic_regression",
            input_dim=int(d["input_dim"]),
            num_classes=int(d["num_classes"]),
            logreg=LogregParams(
                weights=np.asarray(lr["weights"], dtype=np.float64),
                bias=np.asarray(lr["bias"], dtype=np.float64),
            ),
        )
    else:
        g = d["gbdt"]
        model = PlainModel(
            variant="gbdt",
            input_dim=int(d["input_dim"]),
            num_classes=int(d["num_classes"]),
            gbdt=GbdtModel(
                num_classes=int(g["num_classes"]),
                shrinkage=float(g["shrinkage"]),
                base_score=np.asarray(g["base_score"], dtype=np.float64),
                trees=[[RegressionTree.from_dict(t) for t in rnd] for rnd in g["trees"]],
                train_loss=[float(v) for v in g["train_loss"]],
            ),
        )
    return model, schema, normalizer


def save_assl_model(
    path,
    model: AsslModel,
    cfg: AsslConfig,
    schema: DatasetSchema,
    normalizer: Normalizer | None = None,
) -> None:
    payload: dict = {
        "format": FORMAT_ASSL,
        "config": cfg.to_dict(),
        "networks": {
            "encoder": mlp_to_dict(model.encoder),
            "supervised_head": mlp_to_dict(model.supervised_head),
            "semi_head": mlp_to_dict(model.semi_head),
            "discriminator": mlp_to_dict(model.discriminator),
        },
    }
    payload.update(_schema_block(schema))
    payload.update(_normalizer_block(normalizer))
    _dump(payload, path)


def load_assl_model(path) -> tuple[AsslModel, AsslConfig, DatasetSchema, Normalizer | None]:
    d = _load(path)
    if d.get("format") != FORMAT_ASSL:
        raise ValueError(f"{path} is not a phase-II model file")
    nets = d["networks"]
    model = AsslModel(
        encoder=mlp_from_dict(nets["encoder"]),
        supervised_head=mlp_from_dict(nets["supervised_head"]),
        semi_head=mlp_from_dict(nets["semi_head"]),
        discriminator=mlp_from_dict(nets["discriminator"]),
    )
    cfg = AsslConfig.from_dict(d["config"])
    schema = DatasetSchema.from_dict(d["schema"])
    normalizer = None if d["normalizer"] is None else Normalizer.from_dict(d["normalizer"])
    return model, cfg, schema, normalizer


def detect_model_format(path) -> str:
    fmt = _load(path).get("format", "")
    if fmt not in (FORMAT_PLAIN, FORMAT_ASSL):
        raise ValueError(f"{path} holds unknown model format {fmt!r}")
    return fmt
