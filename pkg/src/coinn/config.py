"""JSON run configuration shared by all CLI subcommands."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .ann import TrainConfig
from .correlations import CorrelationChoice
from .experiment import PAPER_INPUT_SETS, InputSetSpec

CONFIG_VERSION = 1
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int
    dataset: Path | None = None
    schema: dict[str, str] = field(default_factory=dict)
    n_bins: int | None = None
    correlation: CorrelationChoice = CorrelationChoice()
    train: TrainConfig = TrainConfig()
    input_sets: tuple[InputSetSpec, ...] = PAPER_INPUT_SETS
    model_inputs: str = "x-ID-SM"
    n_hidden: int = 6
    n_hidden_range: tuple[int, ...] = tuple(range(1, 16))
    holdout_ids: tuple[str, ...] = ()
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    model_path: Path | None = None
    analysis_columns: tuple[str, ...] | None = None
    output_dir: Path = Path("out")
    formats: tuple[str, ...] = FORMATS
    source: dict = field(default_factory=dict, compare=False)

    def input_set(self, name: str | None = None) -> InputSetSpec:
        name = name or self.model_inputs
        for spec in self.input_sets:
            if spec.name == name:
                return spec
        raise ConfigError(f"no input set named {name!r}; have {[s.name for s in self.input_sets]}")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.source, sort_keys=True).encode()).hexdigest()


def _get(d: dict, key: str, kind, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigError(f"config is missing required field {key!r}")
        return default
    value = d[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"config field {key!r} must be {kind.__name__}, got {value!r}")
    return value


def _path(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def parse_config(raw: dict[str, Any], base_dir: Path = Path("."), seed: int | None = None,
                 output_dir: str | None = None) -> RunConfig:
    """Validate a config document; ``seed``/``output_dir`` are command-line overrides."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = json.loads(json.dumps(raw))
    if raw.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {raw.get('version')!r}")
    if seed is not None:
        raw["seed"] = seed
    if output_dir is not None:
        raw["output_dir"] = output_dir
    seed_value = _get(raw, "seed", int, required=True)
    if not 0 <= seed_value < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")

    ds = _get(raw, "dataset", dict, {})
    corr = _get(raw, "correlation", dict, {})
    train = _get(raw, "train", dict, {})
    model = _get(raw, "model", dict, {})
    try:
        choice = CorrelationChoice(
            kind=_get(corr, "kind", str, "sun_mishima"),
            literal_mode=_get(corr, "literal_mode", bool, False),
            laminar_re=_get(corr, "laminar_re", float, 2000.0),
        )
        known = {f.name for f in fields(TrainConfig)} - {"seed"}
        extra = set(train) - known
        if extra:
            raise ConfigError(f"unknown train option(s): {sorted(extra)}")
        train_cfg = TrainConfig(seed=seed_value, **train)
        sets = raw.get("input_sets")
        input_sets = PAPER_INPUT_SETS if sets is None else tuple(
            InputSetSpec(s["name"], tuple(s["features"])) for s in sets
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None

    rng = _get(raw, "n_hidden_range", list, [1, 15])
    if len(rng) != 2 or not all(isinstance(v, int) and v >= 1 for v in rng) or rng[0] > rng[1]:
        raise ConfigError("n_hidden_range must be [first, last] with 1 <= first <= last")
    fractions = tuple(float(f) for f in _get(raw, "fractions", list, [0.70, 0.15, 0.15]))
    if len(fractions) != 3 or abs(sum(fractions) - 1) > 1e-9:
        raise ConfigError("fractions must be three numbers summing to 1")
    formats = tuple(_get(raw, "formats", list, list(FORMATS)))
    if not formats or any(f not in FORMATS for f in formats):
        raise ConfigError(f"formats must be a non-empty subset of {FORMATS}")
    n_bins = _get(ds, "n_bins", int, None)
    if n_bins is not None and n_bins < 1:
        raise ConfigError("dataset.n_bins must be >= 1")
    cols = _get(raw, "analysis_columns", list, None)

    cfg = RunConfig(
        seed=seed_value,
        dataset=_path(base_dir, _get(ds, "path", str, None)),
        schema=_get(ds, "schema", dict, {}),
        n_bins=n_bins,
        correlation=choice,
        train=train_cfg,
        input_sets=input_sets,
        model_inputs=_get(model, "input_set", str,
                          "x-ID-SM" if any(s.name == "x-ID-SM" for s in input_sets) else input_sets[0].name),
        n_hidden=_get(model, "n_hidden", int, 6),
        n_hidden_range=tuple(range(rng[0], rng[1] + 1)),
        holdout_ids=tuple(str(h) for h in _get(raw, "holdout_ids", list, [])),
        fractions=fractions,
        model_path=_path(base_dir, _get(model, "path", str, None)),
        analysis_columns=None if cols is None else tuple(cols),
        output_dir=_path(base_dir, _get(raw, "output_dir", str, "out")),
        formats=formats,
        source=raw,
    )
    if cfg.dataset is not None and not cfg.dataset.exists():
        raise ConfigError(f"dataset file not found: {cfg.dataset}")
    if cfg.n_hidden < 1:
        raise ConfigError("model.n_hidden must be >= 1")
    cfg.input_set()
    return cfg


def load_config(path: str | Path, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    # command-line output dirs are relative to the working directory
    out = None if output_dir is None else str(Path(output_dir).resolve())
    return parse_config(raw, path.parent, seed, out)
