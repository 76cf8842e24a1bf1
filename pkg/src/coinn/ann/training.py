"""Levenberg-Marquardt training and seeded multi-start selection."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .network import (
    NetworkParams, forward, forward_scaled, jacobian_scaled, minmax_range, mre,
    scale_inputs, scale_outputs,
)

MODEL_FORMAT_VERSION = 1
LAMBDA_FLOOR = 1e-20


class TrainingError(RuntimeError):
    """Every restart failed; ``history`` holds the per-restart records."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class FeatureMismatch(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    n_restarts: int = 1000
    max_iter: int = 1000
    lambda_init: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    lambda_max: float = 1e10
    grad_tol: float = 1e-10
    seed: int = 0
    selection: str = "validation"
    damping: str = "levenberg"

    def __post_init__(self):
        if self.n_restarts < 1 or self.max_iter < 1:
            raise ValueError("n_restarts and max_iter must be >= 1")
        if not self.lambda_up > 1 > self.lambda_down > 0:
            raise ValueError("need lambda_up > 1 > lambda_down > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.selection not in ("validation", "train"):
            raise ValueError(f"unknown selection set {self.selection!r}")
        if self.damping not in ("levenberg", "marquardt"):
            raise ValueError(f"unknown damping {self.damping!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LMResult:
    params: NetworkParams
    mse_history: list[float]
    n_iter: int
    stop_reason: str
    diverged: bool = False

    @property
    def mse(self) -> float:
        return self.mse_history[-1]

    def __iter__(self):
        # allows ``params, history = lm_fit(...)``
        return iter((self.params, self.mse_history))


def lm_fit(initial: NetworkParams, inputs, targets, cfg: TrainConfig = TrainConfig()) -> LMResult:
    """Minimise the mean squared error in scaled-output units by Levenberg-Marquardt.

    A trial step is accepted only if it strictly lowers the mse, so the
    recorded history is strictly decreasing. Stops after ``cfg.max_iter``
    iterations, when ``max|J^T r| < cfg.grad_tol``, or when the damping
    exceeds ``cfg.lambda_max`` (flagged as diverged; the best parameters so
    far are returned).
    """
    u = scale_inputs(initial, np.atleast_2d(np.asarray(inputs, dtype=float)))
    t = scale_outputs(initial, np.asarray(targets, dtype=float).ravel())
    if u.shape[0] == 0 or u.shape[0] != t.size:
        raise ValueError("training batch must be non-empty with one target per row")
    if not np.all(np.isfinite(t)):
        raise ValueError("targets must be finite")

    params = initial
    theta = initial.theta
    n_w = theta.size
    eye = np.eye(n_w)
    r = t - forward_scaled(params, u)
    mse = float(r @ r) / t.size
    history = [mse]
    lam = cfg.lambda_init
    stop = "max_iter"
    diverged = False
    it = 0
    while it < cfg.max_iter:
        it += 1
        jac = jacobian_scaled(params, u)
        grad = jac.T @ r
        if np.max(np.abs(grad)) < cfg.grad_tol:
            stop = "grad_tol"
            break
        jtj = jac.T @ jac
        damp = eye if cfg.damping == "levenberg" else np.diag(np.maximum(np.diag(jtj), 1e-12))
        accepted = False
        while lam <= cfg.lambda_max:
            try:
                step = np.linalg.solve(jtj + lam * damp, grad)
            except np.linalg.LinAlgError:
                lam *= cfg.lambda_up
                continue
            trial_theta = theta + step
            if np.all(np.isfinite(trial_theta)):
                trial = params.with_theta(trial_theta)
                r_new = t - forward_scaled(trial, u)
                mse_new = float(r_new @ r_new) / t.size
                if mse_new < mse:
                    theta, params, r, mse = trial_theta, trial, r_new, mse_new
                    history.append(mse)
                    lam = max(lam * cfg.lambda_down, LAMBDA_FLOOR)
                    accepted = True
                    break
            lam *= cfg.lambda_up
        if not accepted:
            stop, diverged = "lambda_max", True
            break
    return LMResult(params, history, it, stop, diverged)


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    """Independent stream for one restart, a pure function of (seed, restart)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(restart,))))


def init_params(n_in: int, n_hidden: int, in_scale, out_scale, rng: np.random.Generator) -> NetworkParams:
    """Uniform [-1, 1] draw for every trainable weight."""
    theta = rng.uniform(-1.0, 1.0, size=n_hidden * (n_in + 2) + 1)
    return NetworkParams.zeros(n_in, n_hidden, in_scale, out_scale).with_theta(theta)


@dataclass(frozen=True)
class TrainedModel:
    params: NetworkParams
    chosen_restart: int
    seed_used: int
    feature_names: tuple[str, ...] = ()
    history: tuple[dict, ...] = field(default=(), compare=False)

    def predict(self, inputs, feature_names: Sequence[str] | None = None):
        if feature_names is not None and self.feature_names and tuple(feature_names) != self.feature_names:
            raise FeatureMismatch(
                f"model expects features {list(self.feature_names)}, got {list(feature_names)}"
            )
        return forward(self.params, inputs)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "version": MODEL_FORMAT_VERSION,
            "n_in": p.n_in,
            "n_hidden": p.n_hidden,
            "w1": p.w1.tolist(),
            "b1": p.b1.tolist(),
            "w2": [p.w2.tolist()],
            "b2": p.b2,
            "in_scale": p.in_scale.tolist(),
            "out_scale": p.out_scale.tolist(),
            "seed_used": self.seed_used,
            "chosen_restart": self.chosen_restart,
            "input_feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        params = NetworkParams(d["w1"], d["b1"], np.asarray(d["w2"]).ravel(), d["b2"],
                               d["in_scale"], d["out_scale"])
        if params.n_in != d["n_in"] or params.n_hidden != d["n_hidden"]:
            raise ValueError("model shape fields disagree with the weight arrays")
        names = tuple(d.get("input_feature_names", ()))
        if names and len(names) != params.n_in:
            raise ValueError("input_feature_names length differs from n_in")
        return cls(params, int(d["chosen_restart"]), int(d["seed_used"]), names)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "TrainedModel":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"model file not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


def _run_restart(args):
    i, x_train, y_train, x_sel, y_sel, cfg, n_hidden, in_scale, out_scale = args
    rng = restart_rng(cfg.seed, i)
    start = init_params(x_train.shape[1], n_hidden, in_scale, out_scale, rng)
    res = lm_fit(start, x_train, y_train, cfg)
    pred = forward(res.params, x_sel)
    score = mre(y_sel, pred) if np.all(np.isfinite(pred)) else math.inf
    record = {
        "restart": i,
        "mse": res.mse,
        "mre": score,
        "n_iter": res.n_iter,
        "stop_reason": res.stop_reason,
        "diverged": res.diverged,
    }
    return record, res.params


def train_multistart(
    train: tuple,
    validation: tuple,
    cfg: TrainConfig,
    n_hidden: int = 6,
    feature_names: Sequence[str] = (),
    n_jobs: int = 1,
) -> TrainedModel:
    """Train ``cfg.n_restarts`` networks from seeded random starts and keep the best.

    ``train`` and ``validation`` are ``(inputs, targets)`` pairs. Scaling
    ranges come from the training set and are shared by all restarts. The
    winner minimises the mre on ``cfg.selection``; ties go to the lowest
    restart index. Restarts run in ``n_jobs`` worker processes without
    affecting the result.
    """
    x_train = np.atleast_2d(np.asarray(train[0], dtype=float))
    y_train = np.asarray(train[1], dtype=float).ravel()
    x_val = np.atleast_2d(np.asarray(validation[0], dtype=float))
    y_val = np.asarray(validation[1], dtype=float).ravel()
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise ValueError("train and validation sets must be non-empty")
    if n_hidden < 1:
        raise ValueError("n_hidden must be >= 1")
    x_sel, y_sel = (x_val, y_val) if cfg.selection == "validation" else (x_train, y_train)

    in_scale = minmax_range(x_train)
    out_scale = minmax_range(y_train)[0]
    jobs = [(i, x_train, y_train, x_sel, y_sel, cfg, n_hidden, in_scale, out_scale)
            for i in range(cfg.n_restarts)]
    if n_jobs > 1 and cfg.n_restarts > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_restart, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))
    else:
        results = [_run_restart(j) for j in jobs]

    history = tuple(r for r, _ in results)
    best = None
    for rec, params in results:
        if math.isfinite(rec["mre"]) and (best is None or rec["mre"] < best[0]["mre"]):
            best = (rec, params)
    if best is None:
        raise TrainingError("all restarts produced non-finite predictions", history)
    return TrainedModel(best[1], best[0]["restart"], cfg.seed, tuple(feature_names), history)


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
