"""Input-set and hidden-neuron sweeps, per-experiment evaluation, and a synthetic benchmark task."""
from __future__ import annotations

import csv
import json
import math
import time
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import TARGET, feature_names, point_features
from .ann import TrainConfig, TrainedModel, TrainingError, mre, train_multistart
from .ann.training import FeatureMismatch
from .correlations import LAMINAR_RE, CorrelationChoice, evaluate_correlation, predict
from .datamodel import (
    ChannelGeometry, Dataset, ExperimentPoint, FlowCondition, FluidState, SplitAssignment,
    make_split,
)


@dataclass(frozen=True)
class InputSetSpec:
    name: str
    features: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise ValueError(f"input set {self.name!r} has no features")
        if len(set(self.features)) != len(self.features):
            raise ValueError(f"input set {self.name!r} repeats a feature")
        if "all" in self.features and len(self.features) > 1:
            raise ValueError("'all' cannot be combined with other features")

    def resolve(self, ds: Dataset) -> tuple[str, ...]:
        """Concrete column names; ``all`` expands to every feature except the target."""
        available = feature_names(ds)
        if self.features == ("all",):
            return tuple(n for n in available if n != TARGET)
        unknown = [f for f in self.features if f not in available or f == TARGET]
        if unknown:
            raise KeyError(f"input set {self.name!r}: unknown feature(s) {unknown}")
        return self.features


PAPER_INPUT_SETS = (
    InputSetSpec("x-rough-G-Re", ("x", "roughness", "G", "Re_2ph")),
    InputSetSpec("x-ID-SM", ("x", "ID", "sun_mishima")),
    InputSetSpec("x-ID-Awad", ("x", "ID", "awad")),
    InputSetSpec("all", ("all",)),
)
COINN_INPUTS = PAPER_INPUT_SETS[1]


def assemble_inputs(
    spec: InputSetSpec,
    ds: Dataset,
    literal_mode: bool = False,
    laminar_re: float = LAMINAR_RE,
) -> tuple[np.ndarray, np.ndarray]:
    """Input matrix (N, n_features) in the spec's column order, and measured targets."""
    names = spec.resolve(ds)
    rows = [point_features(p, literal_mode, laminar_re) for p in ds]
    x = np.array([[r.get(n, 0.0) for n in names] for r in rows], dtype=float).reshape(len(rows), len(names))
    y = np.array([p.dpdz_exp for p in ds], dtype=float)
    return x, y


def derive_seed(master: int, *key: int) -> int:
    """64-bit seed that depends only on the master seed and ``key``."""
    state = np.random.SeedSequence(master, spawn_key=tuple(key)).generate_state(1, np.uint64)
    return int(state[0])


def cell_seed(master: int, spec_name: str, n_hidden: int) -> int:
    return derive_seed(master, zlib.crc32(spec_name.encode()), n_hidden)


@dataclass(frozen=True)
class SweepCell:
    input_set: str
    n_hidden: int
    seed: int
    mre_train: float
    mre_validation: float
    mre_test: float
    mre_holdout: float
    mre_avg: float
    chosen_restart: int
    runtime_s: float
    error: str = ""


@dataclass
class SweepReport:
    cells: list[SweepCell]
    master_seed: int
    split: SplitAssignment | None = None

    def cell(self, input_set: str, n_hidden: int) -> SweepCell:
        for c in self.cells:
            if c.input_set == input_set and c.n_hidden == n_hidden:
                return c
        raise KeyError((input_set, n_hidden))

    @property
    def chosen(self) -> SweepCell | None:
        """Cell with the lowest averaged mre; ties go to the smaller network."""
        ok = [c for c in self.cells if math.isfinite(c.mre_avg)]
        return min(ok, key=lambda c: (c.mre_avg, c.n_hidden)) if ok else None

    def to_dict(self) -> dict:
        best = self.chosen
        return {
            "master_seed": self.master_seed,
            "chosen": None if best is None else {"input_set": best.input_set, "n_hidden": best.n_hidden},
            "cells": [_json_safe(asdict(c)) for c in self.cells],
        }

    def to_csv(self, path) -> None:
        _write_rows(path, [asdict(c) for c in self.cells], list(SweepCell.__dataclass_fields__))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def _json_safe(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def _write_rows(path, rows, header) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _set_mre(model: TrainedModel, x, y, idx) -> float:
    if len(idx) == 0:
        return math.nan
    return mre(y[idx], model.predict(x[idx]))


def train_cell(
    ds: Dataset,
    spec: InputSetSpec,
    n_hidden: int,
    cfg: TrainConfig,
    split: SplitAssignment,
    n_jobs: int = 1,
    literal_mode: bool = False,
    laminar_re: float = LAMINAR_RE,
) -> tuple[SweepCell, TrainedModel | None]:
    seed = cell_seed(cfg.seed, spec.name, n_hidden)
    x, y = assemble_inputs(spec, ds, literal_mode, laminar_re)
    tr, va = list(split.train), list(split.validation)
    t0 = time.perf_counter()
    try:
        model = train_multistart((x[tr], y[tr]), (x[va], y[va]), replace(cfg, seed=seed), n_hidden,
                                 spec.resolve(ds), n_jobs=n_jobs)
    except TrainingError as exc:
        nan = math.nan
        return SweepCell(spec.name, n_hidden, seed, nan, nan, nan, nan, nan, -1,
                         time.perf_counter() - t0, str(exc)), None
    runtime = time.perf_counter() - t0
    m_test = _set_mre(model, x, y, list(split.test))
    m_hold = _set_mre(model, x, y, list(split.holdout))
    parts = [m for m in (m_test, m_hold) if math.isfinite(m)]
    cell = SweepCell(
        input_set=spec.name, n_hidden=n_hidden, seed=seed,
        mre_train=_set_mre(model, x, y, tr), mre_validation=_set_mre(model, x, y, va),
        mre_test=m_test, mre_holdout=m_hold,
        mre_avg=float(np.mean(parts)) if parts else math.nan,
        chosen_restart=model.chosen_restart, runtime_s=runtime,
    )
    return cell, model


def run_sweep(
    ds: Dataset,
    specs: Sequence[InputSetSpec],
    n_hidden_range: Iterable[int],
    cfg: TrainConfig,
    holdout_ids: Iterable[str] = (),
    fractions=(0.70, 0.15, 0.15),
    n_jobs: int = 1,
    literal_mode: bool = False,
    laminar_re: float = LAMINAR_RE,
) -> SweepReport:
    """Train one multi-start model per (input set, hidden size) cell.

    All cells share one split drawn with ``cfg.seed``; each cell trains with
    its own seed derived from ``cfg.seed``, the input-set name and the hidden
    size, so any cell can be re-run alone. The averaged mre is the plain mean
    of the test-set and holdout-set mre.
    """
    split = make_split(ds, holdout_ids, fractions, cfg.seed)
    cells = []
    for spec in specs:
        for h in n_hidden_range:
            cell, _ = train_cell(ds, spec, h, cfg, split, n_jobs, literal_mode, laminar_re)
            cells.append(cell)
    return SweepReport(cells, cfg.seed, split)


@dataclass(frozen=True)
class ExperimentScore:
    experiment_id: str
    n_points: int
    mre_model: float
    mre_reference: float
    holdout: bool


@dataclass
class EvaluationReport:
    rows: list[ExperimentScore]
    reference: str
    global_mre_model: float = field(init=False)
    global_mre_reference: float = field(init=False)

    def __post_init__(self):
        self.global_mre_model = float(np.mean([r.mre_model for r in self.rows])) if self.rows else math.nan
        self.global_mre_reference = float(np.mean([r.mre_reference for r in self.rows])) if self.rows else math.nan

    def subset_means(self, holdout: bool) -> tuple[float, float]:
        rows = [r for r in self.rows if r.holdout == holdout]
        if not rows:
            return math.nan, math.nan
        return float(np.mean([r.mre_model for r in rows])), float(np.mean([r.mre_reference for r in rows]))

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "global_mre_model": self.global_mre_model,
            "global_mre_reference": self.global_mre_reference,
            "experiments": [asdict(r) for r in self.rows],
        }

    def to_csv(self, path) -> None:
        _write_rows(path, [asdict(r) for r in self.rows], list(ExperimentScore.__dataclass_fields__))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def evaluate_model(
    model: TrainedModel,
    ds: Dataset,
    reference: CorrelationChoice = CorrelationChoice(),
    holdout_ids: Iterable[str] = (),
    features: Sequence[str] | None = None,
) -> EvaluationReport:
    """Per-experiment mre of the network and of a reference correlation."""
    names = tuple(features) if features is not None else model.feature_names
    if not names:
        raise FeatureMismatch("model carries no feature names; pass ``features``")
    if model.feature_names and names != model.feature_names:
        raise FeatureMismatch(f"model expects {list(model.feature_names)}, got {list(names)}")
    if len(names) != model.params.n_in:
        raise FeatureMismatch(f"model takes {model.params.n_in} inputs, {len(names)} features given")
    spec = InputSetSpec("model", names)
    x, y = assemble_inputs(spec, ds, reference.literal_mode, reference.laminar_re)
    y_model = model.predict(x)
    y_ref = predict(reference, ds)
    held = set(holdout_ids)
    rows = []
    for exp in ds.experiments:
        idx = ds.indices_of(exp)
        rows.append(ExperimentScore(exp, len(idx), mre(y[idx], y_model[idx]), mre(y[idx], y_ref[idx]), exp in held))
    return EvaluationReport(rows, reference.kind)


# --------------------------------------------------------------------------
# synthetic benchmark

# operating window of small-channel refrigerant-mixture boiling experiments
SYNTH_RANGES = {
    "ID": (0.5e-3, 2.9e-3),
    "G": (143.0, 242.0),
    "roughness": (0.4e-6, 2.56e-6),
    "P": (265.0, 789.0),
    "rho_l": (420.0, 650.0),
    "rho_v": (6.0, 30.0),
    "mu_l": (1.0e-4, 2.5e-4),
    "mu_v": (8.0e-6, 1.3e-5),
    "sigma": (0.005, 0.015),
}


def synthetic_dataset(
    n_experiments: int = 30,
    points_per_experiment: int = 25,
    seed: int = 2022,
    amplitude: float = 0.3,
    noise: float = 0.02,
    choice: CorrelationChoice = CorrelationChoice(),
) -> Dataset:
    """Experiments whose measured gradient is the Sun & Mishima value times
    ``1 + amplitude * sin(2 pi x)`` with multiplicative Gaussian noise of
    relative size ``noise``.

    Each experiment draws its geometry, mass flux and phase properties
    uniformly from ``SYNTH_RANGES``; qualities are evenly spaced in (0, 1).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    xs = (np.arange(points_per_experiment) + 0.5) / points_per_experiment
    points = []
    for e in range(n_experiments):
        draw = {k: float(rng.uniform(*v)) for k, v in SYNTH_RANGES.items()}
        geom = ChannelGeometry(draw["ID"], draw["roughness"])
        flow = FlowCondition(draw["G"], draw["P"])
        for x in xs:
            fluid = FluidState(draw["rho_l"], draw["rho_v"], draw["mu_l"], draw["mu_v"], draw["sigma"], float(x))
            probe = ExperimentPoint(f"S{e + 1:02d}", fluid, geom, flow, 1.0)
            sm = evaluate_correlation(choice, probe)[0]
            dpdz = sm * (1 + amplitude * math.sin(2 * math.pi * x)) * (1 + noise * rng.standard_normal())
            points.append(replace(probe, dpdz_exp=dpdz))
    return Dataset(tuple(points))


def synthetic_holdouts(ds: Dataset, n: int = 5, seed: int = 7) -> tuple[str, ...]:
    rng = np.random.Generator(np.random.PCG64(seed))
    exps = list(ds.experiments)
    picks = sorted(rng.choice(len(exps), size=n, replace=False))
    return tuple(exps[i] for i in picks)
