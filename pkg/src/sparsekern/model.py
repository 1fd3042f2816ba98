"""Combined artifact: a feature map plus its fitted linear readout."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .features import SparseFeatureMap, apply_features, feature_map_from_json_dict
from .regression import RidgeFit

_MODEL_VERSION = 1
_PREDICT_CHUNK = 2048


@dataclass
class SparseRegressionModel:
    """End-to-end regressor: x -> readout(phi(x))."""

    feature_map: SparseFeatureMap
    readout: RidgeFit
    feature_columns: list = field(default_factory=list)
    target_column: str = "target"

    def predict(self, X, threads: int = 1) -> np.ndarray:
        """Chunked application keeps memory bounded and output byte-stable."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[0] == 0:
            return np.empty(0)
        if X.shape[1] != self.feature_map.l:
            raise ValidationError(f"model expects {self.feature_map.l} input columns, got {X.shape[1]}")
        parts = []
        for lo in range(0, X.shape[0], _PREDICT_CHUNK):
            F = apply_features(self.feature_map, X[lo : lo + _PREDICT_CHUNK], threads=threads)
            parts.append(self.readout.predict(F))
        return np.concatenate(parts)

    def to_json_dict(self) -> dict:
        return {
            "version": _MODEL_VERSION,
            "feature_map": self.feature_map.to_json_dict(),
            "readout": self.readout.to_dict(),
            "data": {"feature_columns": list(self.feature_columns), "target_column": self.target_column},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def model_from_json_dict(doc: dict) -> SparseRegressionModel:
    if doc.get("version") != _MODEL_VERSION:
        raise ValidationError(f"unsupported model version {doc.get('version')!r}")
    data = doc.get("data", {})
    return SparseRegressionModel(
        feature_map=feature_map_from_json_dict(doc["feature_map"]),
        readout=RidgeFit.from_dict(doc["readout"]),
        feature_columns=list(data.get("feature_columns", [])),
        target_column=data.get("target_column", "target"),
    )


def model_from_json(text: str) -> SparseRegressionModel:
    return model_from_json_dict(json.loads(text))
