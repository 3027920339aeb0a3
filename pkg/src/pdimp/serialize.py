"""Versioned JSON round trips for fitted models.

Every document carries ``format`` (currently 1) and a ``kind`` tag; an
expression model serializes as its source text plus the schema it was
bound to.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import FeatureSchema
from .errors import ParameterError
from .expressions import ExpressionModel, parse_expression
from .models import KnnModel, LinearModel, PredictionModel
from .trees import BaggedTreesModel, _Node

FORMAT = 1


def _schema_to_json(schema) -> list[dict]:
    return [f.to_json() for f in schema]


def _schema_from_json(docs) -> tuple[FeatureSchema, ...]:
    return tuple(FeatureSchema.from_json(d) for d in docs)


def _node_to_json(node: _Node) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    doc = {
        "feature": node.feature,
        "value": node.value,
        "left": _node_to_json(node.left),
        "right": _node_to_json(node.right),
    }
    if node.left_levels is None:
        doc["threshold"] = node.threshold
    else:
        doc["left_levels"] = [int(i) for i in np.flatnonzero(node.left_levels)]
        doc["n_levels"] = int(node.left_levels.size)
    return doc


def _node_from_json(doc: dict) -> _Node:
    if "feature" not in doc:
        return _Node(value=doc["value"])
    node = _Node(feature=doc["feature"], value=doc.get("value", 0.0))
    if "threshold" in doc:
        node.threshold = doc["threshold"]
    else:
        mask = np.zeros(doc["n_levels"], dtype=bool)
        mask[doc["left_levels"]] = True
        node.left_levels = mask
    node.left = _node_from_json(doc["left"])
    node.right = _node_from_json(doc["right"])
    return node


def model_to_json(model: PredictionModel) -> dict:
    if isinstance(model, LinearModel):
        return {
            "format": FORMAT,
            "kind": "linear",
            "schema": _schema_to_json(model._feature_schema),
            "intercept": model.intercept,
            "coefficients": model.coefficients,
        }
    if isinstance(model, KnnModel):
        return {
            "format": FORMAT,
            "kind": "knn",
            "schema": _schema_to_json(model._feature_schema),
            "k": model.k,
            "train": model.train.tolist(),
            "targets": model.targets.tolist(),
            "scales": model.scales.tolist(),
        }
    if isinstance(model, BaggedTreesModel):
        return {
            "format": FORMAT,
            "kind": "bagged_trees",
            "schema": _schema_to_json(model._feature_schema),
            "n_trees": model.n_trees,
            "max_depth": model.max_depth,
            "min_leaf": model.min_leaf,
            "seed": model.seed,
            "trees": [_node_to_json(root) for root in model._roots],
        }
    if isinstance(model, ExpressionModel):
        return {
            "format": FORMAT,
            "kind": "expression",
            "schema": _schema_to_json(model._feature_schema),
            "source": model.source,
        }
    raise ParameterError(f"{type(model).__name__} does not serialize to JSON")


def model_from_json(doc: dict) -> PredictionModel:
    if doc.get("format") != FORMAT:
        raise ParameterError(f"unsupported model document format {doc.get('format')!r}")
    kind = doc.get("kind")
    schema = _schema_from_json(doc["schema"])
    if kind == "linear":
        return LinearModel(doc["intercept"], doc["coefficients"], schema)
    if kind == "knn":
        return KnnModel(
            doc["k"], schema,
            np.asarray(doc["train"], dtype=np.float64),
            np.asarray(doc["targets"], dtype=np.float64),
            np.asarray(doc["scales"], dtype=np.float64),
        )
    if kind == "bagged_trees":
        roots = [_node_from_json(t) for t in doc["trees"]]
        return BaggedTreesModel(
            schema, roots, doc["n_trees"], doc["max_depth"], doc["min_leaf"], doc["seed"]
        )
    if kind == "expression":
        return parse_expression(doc["source"], schema)
    raise ParameterError(f"unknown model kind {kind!r}")


def save_model(model: PredictionModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=2)
        fh.write("\n")


def load_model(path) -> PredictionModel:
    with open(Path(path), "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
