"""Versioned JSON checkpoints (schema in schemas/checkpoint.schema.json)."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from .data import Standardizer
from .model import BnnClassifier, LayerVariational

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    model: BnnClassifier
    standardizer: Standardizer | None = None
    feature_names: tuple | None = None
    split_seed: int | None = None
    train_count: int | None = None
    train_config: dict | None = None


def _schema():
    text = resources.files("rupture_bnn").joinpath("schemas/checkpoint.schema.json").read_text()
    return json.loads(text)


def _dump(obj, indent=0) -> str:
    """JSON emitter that writes every float with 17 significant digits."""
    pad = "  " * (indent + 1)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dump(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, indent + 1) for v in obj) + "\n" + "  " * indent + "]"
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            raise CheckpointError("non-finite value cannot be stored")
        return format(float(obj), ".17g")
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def checkpoint_text(ckpt: Checkpoint) -> str:
    m = ckpt.model
    doc = {
        "format_version": FORMAT_VERSION,
        "layer_sizes": m.layer_sizes,
        "layers": [{
            "weight_mean": l.weight_mean,
            "weight_rho": l.weight_rho,
            "bias_mean": l.bias_mean,
            "bias_rho": l.bias_rho,
        } for l in m.layers],
        "prior": {"mean": float(m.prior_mean), "stddev": float(m.prior_stddev)},
        "standardizer": None if ckpt.standardizer is None else {
            "means": ckpt.standardizer.means, "stds": ckpt.standardizer.stds},
        "feature_names": None if ckpt.feature_names is None else list(ckpt.feature_names),
        "split": None if ckpt.split_seed is None else {
            "seed": int(ckpt.split_seed), "train_count": int(ckpt.train_count)},
        "train_config": ckpt.train_config,
    }
    return _dump(doc) + "\n"


def write_atomic(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(model_or_ckpt, path) -> None:
    ckpt = model_or_ckpt if isinstance(model_or_ckpt, Checkpoint) else Checkpoint(model_or_ckpt)
    write_atomic(path, checkpoint_text(ckpt))


def read_checkpoint(path) -> Checkpoint:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: top level must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format_version {version!r} unsupported (expected {FORMAT_VERSION})")
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as e:
        raise CheckpointError(f"{path}: {e.message}") from None

    try:
        layers = [LayerVariational(np.array(l["weight_mean"], dtype=float),
                                   np.array(l["weight_rho"], dtype=float),
                                   np.array(l["bias_mean"], dtype=float),
                                   np.array(l["bias_rho"], dtype=float))
                  for l in doc["layers"]]
        model = BnnClassifier(layers, doc["prior"]["mean"], doc["prior"]["stddev"])
    except ValueError as e:
        raise CheckpointError(f"{path}: inconsistent shapes ({e})") from None
    if model.layer_sizes != doc["layer_sizes"]:
        raise CheckpointError(
            f"{path}: layer_sizes {doc['layer_sizes']} disagree with arrays {model.layer_sizes}")

    std = doc.get("standardizer")
    standardizer = None
    if std is not None:
        standardizer = Standardizer(np.array(std["means"], dtype=float),
                                    np.array(std["stds"], dtype=float))
    split = doc.get("split")
    names = doc.get("feature_names")
    return Checkpoint(
        model=model,
        standardizer=standardizer,
        feature_names=None if names is None else tuple(names),
        split_seed=None if split is None else split["seed"],
        train_count=None if split is None else split["train_count"],
        train_config=doc.get("train_config"),
    )


def load_checkpoint(path) -> BnnClassifier:
    return read_checkpoint(path).model
