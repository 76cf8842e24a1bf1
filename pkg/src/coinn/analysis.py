"""Pearson/Spearman feature-relevance matrices over measured and derived flow variables."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .correlations import (
    LAMINAR_RE, X_EPS, CorrelationChoice, churchill_friction, evaluate_correlation,
    mixture_viscosity,
)
from .datamodel import COMPOSITION_PREFIX, Dataset, ExperimentPoint

MEASURED = ("x", "G", "P", "ID", "roughness")
DERIVED = ("Re_2ph", "Re_l", "Re_v", "f_l", "f_v", "sun_mishima", "awad")
TARGET = "dpdz_exp"


class UndefinedCoefficient(ValueError):
    """Correlation coefficient of a constant column."""


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-D sequences of equal length")
    if x.size < 2:
        raise ValueError("pearson needs at least two samples")
    dx = x - x.mean()
    dy = y - y.mean()
    # population normalisation; cancels in the ratio
    sx = math.sqrt(np.mean(dx * dx))
    sy = math.sqrt(np.mean(dy * dy))
    if sx == 0 or sy == 0:
        raise UndefinedCoefficient("correlation undefined for a constant column")
    r = float(np.mean(dx * dy) / (sx * sy))
    return max(-1.0, min(1.0, r))


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    sorted_v = v[order]
    ranks = np.empty(v.size)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman needs two 1-D sequences of equal length")
    return pearson(average_ranks(x), average_ranks(y))


@dataclass(frozen=True)
class FeatureTable:
    names: tuple[str, ...]
    columns: tuple[np.ndarray, ...]

    def __post_init__(self):
        cols = tuple(np.asarray(c, dtype=float) for c in self.columns)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "columns", cols)
        if len(self.names) != len(cols):
            raise ValueError("one name per column required")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate feature names")
        lengths = {c.size for c in cols}
        if len(lengths) > 1:
            raise ValueError("feature columns differ in length")
        if cols and cols[0].size < 2:
            raise ValueError("feature table needs at least two rows")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[self.names.index(name)]

    def select(self, names: Sequence[str]) -> "FeatureTable":
        return FeatureTable(tuple(names), tuple(self[n] for n in names))

    def to_array(self) -> np.ndarray:
        return np.column_stack(self.columns)


def point_features(
    point: ExperimentPoint,
    literal_mode: bool = False,
    laminar_re: float = LAMINAR_RE,
) -> dict[str, float]:
    """Measured and derived features of one point, keyed by feature-table name.

    Phase-alone Reynolds numbers and friction factors use the quality clipped
    to ``[X_EPS, 1 - X_EPS]`` so they stay defined at x = 0 and x = 1.
    """
    f, g, fl = point.geometry, point.flow, point.fluid
    out = {"x": fl.x, "G": g.g_flux, "P": g.pressure, "ID": f.id, "roughness": f.roughness}
    for name, value in point.composition.items():
        out[COMPOSITION_PREFIX + name] = value
    xc = min(max(fl.x, X_EPS), 1.0 - X_EPS)
    re_l = g.g_flux * (1 - xc) * f.id / fl.mu_l
    re_v = g.g_flux * xc * f.id / fl.mu_v
    rough = f.roughness if literal_mode else f.roughness / f.id
    out["Re_2ph"] = g.g_flux * f.id / mixture_viscosity(fl, "cicchitti")
    out["Re_l"] = re_l
    out["Re_v"] = re_v
    out["f_l"] = churchill_friction(re_l, rough, literal_mode)
    out["f_v"] = churchill_friction(re_v, rough, literal_mode)
    out["sun_mishima"] = evaluate_correlation(CorrelationChoice("sun_mishima", literal_mode, laminar_re), point)[0]
    out["awad"] = evaluate_correlation(CorrelationChoice("awad_muzychka", literal_mode, laminar_re), point)[0]
    out[TARGET] = point.dpdz_exp
    return out


def feature_names(ds: Dataset) -> tuple[str, ...]:
    comps = tuple(COMPOSITION_PREFIX + c for c in ds.composition_names)
    return MEASURED + comps + DERIVED + (TARGET,)


def build_feature_table(
    ds: Dataset,
    columns: Sequence[str] | None = None,
    literal_mode: bool = False,
    laminar_re: float = LAMINAR_RE,
) -> FeatureTable:
    names = feature_names(ds)
    if columns is not None:
        unknown = [c for c in columns if c not in names]
        if unknown:
            raise KeyError(f"unknown feature column(s): {unknown}")
        names = tuple(columns)
    rows = [point_features(p, literal_mode, laminar_re) for p in ds]
    return FeatureTable(names, tuple(np.array([r.get(n, 0.0) for r in rows]) for n in names))


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pairwise coefficients; ``nan`` marks pairs involving a constant column."""

    names: tuple[str, ...]
    values: np.ndarray
    method: str

    def __getitem__(self, pair: tuple[str, str]) -> float:
        a, b = pair
        return float(self.values[self.names.index(a), self.names.index(b)])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.method, *self.names])
            for name, row in zip(self.names, self.values):
                w.writerow([name, *("" if math.isnan(v) else repr(float(v)) for v in row)])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "names": list(self.names),
            "values": [[None if math.isnan(v) else float(v) for v in row] for row in self.values],
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


_METHODS: Mapping[str, object] = {"pearson": pearson, "spearman": spearman}


def correlation_matrix(table: FeatureTable, method: str = "pearson") -> CorrelationMatrix:
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}; use 'pearson' or 'spearman'")
    data = table.columns
    if method == "spearman":
        data = tuple(average_ranks(c) for c in data)
    n = len(data)
    values = np.full((n, n), np.nan)
    constant = [np.all(c == c[0]) for c in data]
    for i in range(n):
        if constant[i]:
            continue
        values[i, i] = 1.0
        for j in range(i + 1, n):
            if not constant[j]:
                values[i, j] = values[j, i] = pearson(data[i], data[j])
    return CorrelationMatrix(table.names, values, method)
