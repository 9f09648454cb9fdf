"""Datasets, feature standardization and on-disk formats.

Dataset files are comma separated with header ``y_1..y_K,x_1..x_p``.  Models
are JSON documents holding ``K``, ``m``, ``p`` and one coefficient block per
subset, keyed by the subset label (``"1,3"``); the block lists the intercept
first, then the ``p`` feature weights.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .mvb import ModelConfig, augment_response, parse_subset, subset_label


class InputError(ValueError):
    """Raised for malformed dataset or model files."""


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.atleast_2d(np.asarray(self.y))
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(f"x has {self.x.shape[0]} rows but y has {self.y.shape[0]}")
        if not np.isin(self.y, (0, 1)).all():
            raise ValueError("responses must be binary (0/1)")
        self.y = self.y.astype(np.int64)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def K(self):
        return self.y.shape[1]

    @property
    def design(self):
        """``(n, p+1)`` design with a leading column of ones."""
        return np.hstack([np.ones((self.n, 1)), self.x])

    def augmented(self, config):
        return augment_response(self.y, config)

    def config(self, m=None):
        return ModelConfig(self.K, self.p, m)

    def subset(self, rows):
        return Dataset(self.x[rows], self.y[rows])


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=float)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(x.mean(axis=0), scale)

    @classmethod
    def identity(cls, p):
        return cls(np.zeros(p), np.ones(p))

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def to_raw(self, C):
        """Map ``(q, p+1)`` coefficients fitted on standardized features to raw features."""
        C = np.asarray(C, dtype=float)
        W = C[:, 1:] / self.scale
        return np.column_stack([C[:, 0] - W @ self.mean, W])

    def to_standardized(self, C):
        C = np.asarray(C, dtype=float)
        W = C[:, 1:] * self.scale
        return np.column_stack([C[:, 0] + C[:, 1:] @ self.mean, W])


def read_dataset(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    ycols = [i for i, h in enumerate(header) if h.startswith("y_")]
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    if not ycols or len(ycols) + len(xcols) != len(header):
        raise InputError(f"{path}: header must be y_1..y_K followed by x_1..x_p")
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if body.ndim != 2 or body.shape[0] == 0 or body.shape[1] != len(header):
        raise InputError(f"{path}: no data rows or ragged rows")
    try:
        return Dataset(body[:, xcols], body[:, ycols])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def fmt(v):
    return f"{v:.12g}"


def write_dataset(path, data):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"y_{k + 1}" for k in range(data.K)] + [f"x_{j + 1}" for j in range(data.p)])
        for yi, xi in zip(data.y, data.x):
            w.writerow([str(int(v)) for v in yi] + [fmt(v) for v in xi])


def _round(obj):
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def model_to_dict(C, config, **extra):
    C = np.asarray(C, dtype=float).reshape(config.q, config.p + 1)
    doc = {
        "K": config.K,
        "m": config.m,
        "p": config.p,
        "blocks": {lab: [float(v) for v in row] for lab, row in zip(config.labels, C)},
    }
    doc.update(extra)
    return _round(doc)


def model_from_dict(doc):
    try:
        config = ModelConfig(int(doc["K"]), int(doc["p"]), int(doc.get("m", doc["K"])))
        C = np.zeros((config.q, config.p + 1))
        for lab, row in doc["blocks"].items():
            mask = parse_subset(lab)
            if mask not in config.position:
                raise InputError(f"block {lab!r} is outside the model's subsets")
            if len(row) != config.p + 1:
                raise InputError(f"block {lab!r} has {len(row)} entries, expected {config.p + 1}")
            C[config.position[mask]] = row
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed model document: {exc}") from None
    return C, config


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_round(doc), fh, indent=2)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None


def write_model(path, C, config, **extra):
    write_json(path, model_to_dict(C, config, **extra))


def read_model(path):
    return model_from_dict(read_json(path))


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in r])


__all__ = [
    "Dataset",
    "InputError",
    "Standardizer",
    "read_dataset",
    "write_dataset",
    "model_to_dict",
    "model_from_dict",
    "read_model",
    "write_model",
    "read_json",
    "write_json",
    "write_table",
    "subset_label",
]
