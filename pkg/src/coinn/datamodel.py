"""Measured two-phase samples, CSV ingestion, quality binning and data splits."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

# canonical column -> meaning; diameter in mm and roughness in um on disk
CSV_COLUMNS = (
    "experiment_id", "x", "G_kg_sm2", "P_kPa", "ID_mm", "roughness_um",
    "rho_l", "rho_v", "mu_l", "mu_v", "sigma", "dpdz_Pa_m",
)
OPTIONAL_COLUMNS = ("T_K", "Dh_mm", "dpdz_std", "n_raw")
COMPOSITION_PREFIX = "comp_"

SPLIT_RNG = "numpy.random.PCG64"
SPLIT_FORMAT_VERSION = 1


class DataError(ValueError):
    """Raised for malformed or physically invalid input data."""


@dataclass(frozen=True)
class FluidState:
    rho_l: float
    rho_v: float
    mu_l: float
    mu_v: float
    sigma: float
    x: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ValueError(f"{f.name}={v!r} is not finite")
        if not self.rho_l > self.rho_v > 0:
            raise ValueError(f"densities must satisfy rho_l > rho_v > 0, got rho_l={self.rho_l}, rho_v={self.rho_v}")
        if self.mu_l <= 0 or self.mu_v <= 0:
            raise ValueError(f"viscosities must be positive, got mu_l={self.mu_l}, mu_v={self.mu_v}")
        if self.sigma <= 0:
            raise ValueError(f"sigma={self.sigma} must be positive")
        if not 0.0 <= self.x <= 1.0:
            raise ValueError(f"x={self.x} outside [0, 1]")


@dataclass(frozen=True)
class ChannelGeometry:
    """Tube geometry in SI units. ``d_h`` defaults to ``id`` (circular section)."""

    id: float
    roughness: float
    d_h: float | None = None

    def __post_init__(self):
        if self.d_h is None:
            object.__setattr__(self, "d_h", self.id)
        if not (math.isfinite(self.id) and self.id > 0):
            raise ValueError(f"id={self.id} must be positive")
        if not (math.isfinite(self.d_h) and self.d_h > 0):
            raise ValueError(f"d_h={self.d_h} must be positive")
        if not (math.isfinite(self.roughness) and 0 <= self.roughness < self.id):
            raise ValueError(f"roughness={self.roughness} must lie in [0, id)")


@dataclass(frozen=True)
class FlowCondition:
    g_flux: float
    pressure: float
    temperature: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.g_flux) and self.g_flux > 0):
            raise ValueError(f"g_flux={self.g_flux} must be positive")
        if not (math.isfinite(self.pressure) and self.pressure > 0):
            raise ValueError(f"pressure={self.pressure} must be positive")


@dataclass(frozen=True)
class ExperimentPoint:
    """One measured sample.

    ``dpdz_std`` and ``n_raw`` are only set by :func:`bin_by_quality`;
    ``composition`` holds optional mixture mole fractions keyed by component.
    """

    experiment_id: str
    fluid: FluidState
    geometry: ChannelGeometry
    flow: FlowCondition
    dpdz_exp: float
    composition: Mapping[str, float] = field(default_factory=dict)
    dpdz_std: float | None = None
    n_raw: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.dpdz_exp) and self.dpdz_exp > 0):
            raise ValueError(f"dpdz_exp={self.dpdz_exp} must be positive")


@dataclass(frozen=True)
class Dataset:
    points: tuple[ExperimentPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def experiments(self) -> tuple[str, ...]:
        """Distinct experiment labels in order of first appearance."""
        return tuple(dict.fromkeys(p.experiment_id for p in self.points))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.points[i] for i in indices))

    def indices_of(self, experiment_id: str) -> list[int]:
        return [i for i, p in enumerate(self.points) if p.experiment_id == experiment_id]

    @property
    def composition_names(self) -> tuple[str, ...]:
        names: dict[str, None] = {}
        for p in self.points:
            names.update(dict.fromkeys(p.composition))
        return tuple(names)


# --------------------------------------------------------------------------
# CSV io

def _resolve_header(header: Sequence[str], schema: Mapping[str, str] | None,
                    require_target: bool = True) -> dict[str, int]:
    schema = dict(schema or {})
    pos = {name.strip(): i for i, name in enumerate(header)}
    out = {}
    for col in CSV_COLUMNS + OPTIONAL_COLUMNS:
        name = schema.get(col, col)
        if name in pos:
            out[col] = pos[name]
        elif col in CSV_COLUMNS and (require_target or col != "dpdz_Pa_m"):
            raise DataError(f"missing required column {name!r}" + (f" (for {col})" if name != col else ""))
    for name, i in pos.items():
        if name.startswith(COMPOSITION_PREFIX):
            out[name] = i
    return out


def _float(cell: str, col: str, row: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"row {row}: column {col!r} has non-numeric value {cell!r}") from None


def _optional(cells, cols, name):
    if name not in cols:
        return None
    cell = cells[cols[name]].strip()
    return cell if cell else None


def _parse_row(cells: Sequence[str], cols: Mapping[str, int], row: int) -> ExperimentPoint:
    val = {c: _float(cells[cols[c]], c, row) for c in CSV_COLUMNS if c != "experiment_id" and c in cols}
    # prediction inputs may omit the measurement; 1.0 keeps the record valid and is never reported
    val.setdefault("dpdz_Pa_m", 1.0)
    try:
        exp_id = cells[cols["experiment_id"]].strip()
        if not exp_id:
            raise ValueError("empty experiment_id")
        id_m = val["ID_mm"] * 1e-3
        dh = _optional(cells, cols, "Dh_mm")
        temp = _optional(cells, cols, "T_K")
        std = _optional(cells, cols, "dpdz_std")
        n_raw = _optional(cells, cols, "n_raw")
        comp = {
            c[len(COMPOSITION_PREFIX):]: _float(cells[i], c, row)
            for c, i in cols.items() if c.startswith(COMPOSITION_PREFIX) and cells[i].strip()
        }
        return ExperimentPoint(
            experiment_id=exp_id,
            fluid=FluidState(val["rho_l"], val["rho_v"], val["mu_l"], val["mu_v"], val["sigma"], val["x"]),
            geometry=ChannelGeometry(
                id_m, val["roughness_um"] * 1e-6,
                None if dh is None else _float(dh, "Dh_mm", row) * 1e-3,
            ),
            flow=FlowCondition(val["G_kg_sm2"], val["P_kPa"], None if temp is None else _float(temp, "T_K", row)),
            dpdz_exp=val["dpdz_Pa_m"],
            composition=comp,
            dpdz_std=None if std is None else _float(std, "dpdz_std", row),
            n_raw=1 if n_raw is None else int(_float(n_raw, "n_raw", row)),
        )
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"row {row}: {exc}") from None


def point_from_fields(fields: Mapping[str, str], require_target: bool = False) -> ExperimentPoint:
    """Build one point from ``{column: text}`` using the CSV column names and units."""
    header = list(fields)
    cols = _resolve_header(header, None, require_target)
    return _parse_row([str(fields[h]) for h in header], cols, 1)


def load_dataset(path: str | Path, schema: Mapping[str, str] | None = None,
                 require_target: bool = True) -> Dataset:
    """Read a CSV file into a :class:`Dataset`.

    ``schema`` maps canonical column names (see ``CSV_COLUMNS``) to the
    header names used in the file. Rows are numbered from 1, not counting
    the header. Any column named ``comp_<name>`` is read as a composition
    fraction.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        cols = _resolve_header(header, schema, require_target)
        points = []
        for row, cells in enumerate(reader, start=1):
            if not any(c.strip() for c in cells):
                continue
            if len(cells) < len(header):
                raise DataError(f"row {row}: expected {len(header)} cells, got {len(cells)}")
            points.append(_parse_row(cells, cols, row))
    return Dataset(tuple(points))


def _fmt(v: float) -> str:
    return repr(float(v))


def _fmt_unit(v: float) -> str:
    # 15 significant digits survive the mm <-> m round trip unchanged
    return format(v, ".15g")


def write_dataset(ds: Dataset, path: str | Path, *, with_metadata: bool = True) -> None:
    comps = ds.composition_names
    has_t = any(p.flow.temperature is not None for p in ds)
    has_dh = any(p.geometry.d_h != p.geometry.id for p in ds)
    header = list(CSV_COLUMNS)
    if has_t:
        header.append("T_K")
    if has_dh:
        header.append("Dh_mm")
    header += [COMPOSITION_PREFIX + c for c in comps]
    if with_metadata:
        header += ["dpdz_std", "n_raw"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in ds:
            f = p.fluid
            row = [
                p.experiment_id, _fmt(f.x), _fmt(p.flow.g_flux), _fmt(p.flow.pressure),
                _fmt_unit(p.geometry.id * 1e3), _fmt_unit(p.geometry.roughness * 1e6),
                _fmt(f.rho_l), _fmt(f.rho_v), _fmt(f.mu_l), _fmt(f.mu_v), _fmt(f.sigma),
                _fmt(p.dpdz_exp),
            ]
            if has_t:
                row.append("" if p.flow.temperature is None else _fmt(p.flow.temperature))
            if has_dh:
                row.append(_fmt_unit(p.geometry.d_h * 1e3))
            row += [_fmt(p.composition[c]) if c in p.composition else "" for c in comps]
            if with_metadata:
                row += ["" if p.dpdz_std is None else _fmt(p.dpdz_std), str(p.n_raw)]
            w.writerow(row)


# --------------------------------------------------------------------------
# quality binning

def quality_bin(x: float, n_bins: int) -> int:
    """Index of the equal-width quality region holding ``x``; x = 1 goes to the last one."""
    return min(int(math.floor(x * n_bins)), n_bins - 1)


def _mean_point(group: Sequence[ExperimentPoint]) -> ExperimentPoint:
    first = group[0]
    for p in group[1:]:
        if p.geometry != first.geometry:
            raise DataError(
                f"experiment {first.experiment_id!r}: geometry differs between points "
                f"({first.geometry} vs {p.geometry})"
            )

    def avg(get):
        return float(np.mean([get(p) for p in group]))

    temps = [p.flow.temperature for p in group]
    comp_keys = dict.fromkeys(k for p in group for k in p.composition)
    comp = {k: avg(lambda p, k=k: p.composition.get(k, 0.0)) for k in comp_keys}
    dpdz = np.array([p.dpdz_exp for p in group])
    return ExperimentPoint(
        experiment_id=first.experiment_id,
        fluid=FluidState(
            rho_l=avg(lambda p: p.fluid.rho_l), rho_v=avg(lambda p: p.fluid.rho_v),
            mu_l=avg(lambda p: p.fluid.mu_l), mu_v=avg(lambda p: p.fluid.mu_v),
            sigma=avg(lambda p: p.fluid.sigma), x=avg(lambda p: p.fluid.x),
        ),
        geometry=first.geometry,
        flow=FlowCondition(
            g_flux=avg(lambda p: p.flow.g_flux), pressure=avg(lambda p: p.flow.pressure),
            temperature=None if any(t is None for t in temps) else float(np.mean(temps)),
        ),
        dpdz_exp=float(dpdz.mean()),
        composition=comp,
        dpdz_std=float(dpdz.std()),
        n_raw=sum(p.n_raw for p in group),
    )


def bin_by_quality(ds: Dataset, n_bins: int = 50) -> Dataset:
    """Average the points of each experiment inside equal-width quality bins on [0, 1].

    A bin holding a single point passes it through untouched, which makes the
    operation idempotent. Output is ordered by experiment (first appearance)
    and then by bin.
    """
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    groups: dict[tuple[str, int], list[ExperimentPoint]] = {}
    for p in ds:
        groups.setdefault((p.experiment_id, quality_bin(p.fluid.x, n_bins)), []).append(p)
    order = {e: k for k, e in enumerate(ds.experiments)}
    out = []
    for key in sorted(groups, key=lambda k: (order[k[0]], k[1])):
        group = groups[key]
        out.append(group[0] if len(group) == 1 else _mean_point(group))
    return Dataset(tuple(out))


# --------------------------------------------------------------------------
# splitting

@dataclass(frozen=True)
class SplitAssignment:
    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]
    holdout: tuple[int, ...]
    seed: int
    holdout_ids: tuple[str, ...] = ()
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    rng: str = SPLIT_RNG

    def sizes(self) -> tuple[int, int, int, int]:
        return len(self.train), len(self.validation), len(self.test), len(self.holdout)

    def to_dict(self) -> dict:
        return {
            "version": SPLIT_FORMAT_VERSION,
            "rng": self.rng,
            "seed": self.seed,
            "holdout_ids": list(self.holdout_ids),
            "fractions": list(self.fractions),
            "train": list(self.train),
            "validation": list(self.validation),
            "test": list(self.test),
            "holdout": list(self.holdout),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SplitAssignment":
        return cls(
            train=tuple(d["train"]), validation=tuple(d["validation"]),
            test=tuple(d["test"]), holdout=tuple(d["holdout"]),
            seed=int(d["seed"]), holdout_ids=tuple(d["holdout_ids"]),
            fractions=tuple(d["fractions"]), rng=d.get("rng", SPLIT_RNG),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SplitAssignment":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _canonical_key(ds: Dataset, i: int):
    p = ds[i]
    f = p.fluid
    return (
        p.experiment_id, f.x, p.flow.g_flux, p.flow.pressure, p.dpdz_exp,
        f.rho_l, f.rho_v, f.mu_l, f.mu_v, f.sigma, p.geometry.id, p.geometry.roughness, i,
    )


def make_split(
    ds: Dataset,
    holdout_ids: Iterable[str] = (),
    fractions: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitAssignment:
    """Hold out whole experiments, then shuffle the rest into train/validation/test.

    Train and validation sizes are rounded down; the remainder goes to test.
    Points are put into a canonical order (experiment, then point contents)
    before the seeded shuffle, so the assignment does not depend on input row
    order.
    """
    holdout_ids = tuple(holdout_ids)
    known = set(ds.experiments)
    unknown = [h for h in holdout_ids if h not in known]
    if unknown:
        raise DataError(f"unknown holdout experiment(s): {', '.join(map(str, unknown))}")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")

    held = set(holdout_ids)
    holdout = [i for i, p in enumerate(ds) if p.experiment_id in held]
    rest = sorted((i for i, p in enumerate(ds) if p.experiment_id not in held),
                  key=lambda i: _canonical_key(ds, i))
    rng = np.random.Generator(np.random.PCG64(seed))
    shuffled = [rest[k] for k in rng.permutation(len(rest))]
    n = len(shuffled)
    n_train = int(math.floor(fractions[0] * n + 1e-9))
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    return SplitAssignment(
        train=tuple(sorted(shuffled[:n_train])),
        validation=tuple(sorted(shuffled[n_train:n_train + n_val])),
        test=tuple(sorted(shuffled[n_train + n_val:])),
        holdout=tuple(holdout),
        seed=int(seed),
        holdout_ids=holdout_ids,
        fractions=fractions,
    )


def with_x(point: ExperimentPoint, x: float) -> ExperimentPoint:
    """Copy of ``point`` at a different vapor quality."""
    return replace(point, fluid=replace(point.fluid, x=x))
