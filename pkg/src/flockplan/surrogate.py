"""Recurrent weekly surrogate of flock response, written from scratch.

One model per production week maps the week's daily climate plans, plus the
previous day's three outputs, to the next day's outputs. Day 1 of the week
is seeded with the boundary-day outputs carried inside the input vector; from
day 2 on, the model's own prediction is fed back into the three state slots,
so a whole week rolls out from a single flat input row.

Gates use the logistic function; candidate values and hidden states use
softsign, whose bounded range keeps long products stable. The output layer
is a fully connected 3-unit head with ReLU. Training is full-batch gradient
descent with step-decayed learning rate and L2 pressure on the weight
matrices; gradients flow through the output-recycling path as well as the
usual hidden/cell recurrence.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .dataset import (
    WeeklyDataset,
    partition_weeks,
    ve_bounds_from_matrices,
    week_size,
)
from .domain import Bounds, minmax_denorm, minmax_norm
from .errors import (
    ConfigDomain,
    DimensionMismatch,
    Diverged,
    SchemaVersionError,
    ShapeError,
    ZeroVariance,
)

log = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1
INPUT_SIZE = 10  # 7 plan values + 3 recycled outputs
OUTPUT_SIZE = 3

_GATES = ("f", "i", "j", "o")


def softsign(z):
    return z / (1.0 + np.abs(z))


def dsoftsign(z):
    return 1.0 / (1.0 + np.abs(z)) ** 2


def relu(z):
    return np.maximum(z, 0.0)


@dataclass
class LstmLayerParams:
    """One recurrent layer: input, recurrent and bias tensors per gate."""

    w_xf: np.ndarray
    w_xi: np.ndarray
    w_xj: np.ndarray
    w_xo: np.ndarray
    w_hf: np.ndarray
    w_hi: np.ndarray
    w_hj: np.ndarray
    w_ho: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_j: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        h, d = self.w_xf.shape
        for name in ("w_xf", "w_xi", "w_xj", "w_xo"):
            if getattr(self, name).shape != (h, d):
                raise ShapeError(f"{name} shape {getattr(self, name).shape}, "
                                 f"expected {(h, d)}")
        for name in ("w_hf", "w_hi", "w_hj", "w_ho"):
            if getattr(self, name).shape != (h, h):
                raise ShapeError(f"{name} shape {getattr(self, name).shape}, "
                                 f"expected {(h, h)}")
        for name in ("b_f", "b_i", "b_j", "b_o"):
            if getattr(self, name).shape != (h,):
                raise ShapeError(f"{name} shape {getattr(self, name).shape}, "
                                 f"expected {(h,)}")

    @property
    def hidden_size(self) -> int:
        return self.w_xf.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_xf.shape[1]


@dataclass(frozen=True)
class Hyperparams:
    """Training configuration; defaults are the settings the pipeline ships with."""

    epochs: int = 1000
    lr0: float = 0.005
    lr_decay: float = 0.95
    decay_every: int = 300
    l2_rate: float = 0.003
    hidden_layers: int = 3
    hidden_size: int = 10
    batch_size: int = 1  # 0 = full batch
    channel_balance: bool = False
    first_day_weight: float = 1.0
    plan_noise: float = 0.0  # train-time jitter sd on climate inputs, normalized units
    recycle_noise: float = 0.0  # train-time jitter sd on recycled outputs
    init: str = "he"
    gate_activation: str = "sigmoid"
    state_activation: str = "softsign"
    output_activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.decay_every, self.hidden_layers,
               self.hidden_size) < 1 or self.batch_size < 0:
            raise ConfigDomain("epochs, decay_every and sizes must be >= 1")
        if self.lr0 <= 0 or not 0 < self.lr_decay <= 1 or self.l2_rate < 0:
            raise ConfigDomain("bad learning-rate or regularization settings")
        if self.first_day_weight <= 0:
            raise ConfigDomain("first_day_weight must be positive")
        if self.plan_noise < 0 or self.recycle_noise < 0:
            raise ConfigDomain("noise scales must be non-negative")
        fixed = {
            "init": "he", "gate_activation": "sigmoid",
            "state_activation": "softsign", "output_activation": "relu",
        }
        for key, supported in fixed.items():
            if getattr(self, key) != supported:
                raise ConfigDomain(
                    f"{key}={getattr(self, key)!r} not implemented "
                    f"(only {supported!r})"
                )


@dataclass
class WeekModel:
    """Trained weekly surrogate plus its scaling bounds.

    ``bounds`` covers the flat week-input layout (length 7*wS+3); positions
    7..9 double as the output bounds. ``week_index`` 0 marks an ad-hoc model
    (free week_len, used for toys); 1..6 enforce the production week sizes.
    """

    week_index: int
    week_len: int
    layers: tuple[LstmLayerParams, ...]
    w_out: np.ndarray
    b_out: np.ndarray
    bounds: Bounds
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.week_index <= 6:
            raise ShapeError(f"week_index {self.week_index} outside 0..6")
        if self.week_index > 0 and self.week_len != week_size(self.week_index):
            raise ShapeError(
                f"week {self.week_index} must have length "
                f"{week_size(self.week_index)}, got {self.week_len}"
            )
        if self.week_len < 1:
            raise ShapeError("week_len must be >= 1")
        if not self.layers:
            raise ShapeError("need at least one recurrent layer")
        if self.layers[0].input_size != INPUT_SIZE:
            raise ShapeError(
                f"first layer input size {self.layers[0].input_size}, "
                f"expected {INPUT_SIZE}"
            )
        for k in range(1, len(self.layers)):
            if self.layers[k].input_size != self.layers[k - 1].hidden_size:
                raise ShapeError(f"layer {k + 1} input does not match "
                                 f"layer {k} hidden size")
        h_top = self.layers[-1].hidden_size
        if self.w_out.shape != (OUTPUT_SIZE, h_top):
            raise ShapeError(f"output weights {self.w_out.shape}, "
                             f"expected {(OUTPUT_SIZE, h_top)}")
        if self.b_out.shape != (OUTPUT_SIZE,):
            raise ShapeError("output bias must have length 3")
        if len(self.bounds) != 7 * self.week_len + 3:
            raise ShapeError(
                f"bounds length {len(self.bounds)}, "
                f"expected {7 * self.week_len + 3}"
            )

    @property
    def input_length(self) -> int:
        return 7 * self.week_len + 3

    @property
    def output_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.bounds.maxi[7:10], self.bounds.mini[7:10]


@dataclass(frozen=True)
class WeekPrediction:
    """Denormalized model outputs for one week."""

    last: np.ndarray         # (3,) day-wS outputs
    trajectory: np.ndarray   # (wS, 3)
    normalized: np.ndarray   # (wS, 3), model space


def cell_step(
    params: LstmLayerParams, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One recurrent step.

    The forget/input/output gates are logistic; the candidate vector uses
    softsign. Note the naming: ``i`` carries candidate values, ``j`` is the
    input gate.
    """
    x = np.asarray(x, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    c_prev = np.asarray(c_prev, dtype=float)
    h, d = params.hidden_size, params.input_size
    if x.shape != (d,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected {(d,)}")
    if h_prev.shape != (h,) or c_prev.shape != (h,):
        raise DimensionMismatch("state vectors must match hidden size")
    hs, cs = _cell_forward(params, x[None, :], h_prev[None, :], c_prev[None, :])[:2]
    return hs[0], cs[0]


def _cell_forward(params, x, h_prev, c_prev):
    """Batched cell step; returns (h, c, gate cache for backprop)."""
    f = expit(x @ params.w_xf.T + h_prev @ params.w_hf.T + params.b_f)
    i = softsign(x @ params.w_xi.T + h_prev @ params.w_hi.T + params.b_i)
    j = expit(x @ params.w_xj.T + h_prev @ params.w_hj.T + params.b_j)
    o = expit(x @ params.w_xo.T + h_prev @ params.w_ho.T + params.b_o)
    c = c_prev * f + i * j
    h = softsign(c) * o
    return h, c, (x, h_prev, c_prev, f, i, j, o, c)


def _forward_norm(model: WeekModel, vn: np.ndarray, with_cache: bool = False,
                  recycle_noise: np.ndarray | None = None):
    """Roll a batch of normalized week inputs through the stacked cells.

    Returns normalized per-day outputs (n, wS, 3); with ``with_cache`` also
    the per-step tensors needed for backpropagation. ``recycle_noise``
    (n, wS-1, 3) perturbs the recycled outputs at train time; the additive
    constant leaves the backward chain untouched because the cache stores
    the perturbed inputs.
    """
    n = vn.shape[0]
    ws = model.week_len
    sizes = [layer.hidden_size for layer in model.layers]
    h = [np.zeros((n, s)) for s in sizes]
    c = [np.zeros((n, s)) for s in sizes]
    y_prev = vn[:, 7:10]
    outputs = np.empty((n, ws, OUTPUT_SIZE))
    cache = [] if with_cache else None
    for t in range(1, ws + 1):
        lo = 0 if t == 1 else 7 * t - 4
        x_day = vn[:, lo:lo + 7]
        if recycle_noise is not None and t > 1:
            y_prev = y_prev + recycle_noise[:, t - 2]
        inp = np.concatenate([x_day, y_prev], axis=1)
        step_cache = []
        for k, layer in enumerate(model.layers):
            h[k], c[k], gates = _cell_forward(layer, inp, h[k], c[k])
            if with_cache:
                step_cache.append(gates)
            inp = h[k]
        z = h[-1] @ model.w_out.T + model.b_out
        y = relu(z)
        outputs[:, t - 1] = y
        if with_cache:
            cache.append((step_cache, z, h[-1]))
        y_prev = y
    return (outputs, cache) if with_cache else outputs


def forward_week_many(
    model: WeekModel, v: np.ndarray, mode: str = "strict"
) -> tuple[np.ndarray, np.ndarray]:
    """Predict a batch of raw flat week inputs.

    Returns (denormalized last-day outputs (n, 3), normalized trajectories
    (n, wS, 3)). ``mode`` selects how out-of-bounds raw inputs are handled.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.shape[1] != model.input_length:
        raise DimensionMismatch(
            f"input length {v.shape[1]}, expected {model.input_length}"
        )
    vn = minmax_norm(v, model.bounds.maxi, model.bounds.mini, mode=mode)
    traj = _forward_norm(model, vn)
    maxi, mini = model.output_bounds
    last = minmax_denorm(traj[:, -1], maxi, mini)
    return last, traj


def forward_week(
    model: WeekModel, v_e: np.ndarray, mode: str = "strict"
) -> WeekPrediction:
    """Predict one week from a raw flat input row."""
    v_e = np.asarray(v_e, dtype=float)
    if v_e.ndim != 1:
        raise DimensionMismatch("v_e must be a flat vector")
    last, traj = forward_week_many(model, v_e[None, :], mode=mode)
    maxi, mini = model.output_bounds
    return WeekPrediction(
        last=last[0],
        trajectory=minmax_denorm(traj[0], maxi, mini),
        normalized=traj[0],
    )


# --- training ---------------------------------------------------------------

def _init_model(week_index, week_len, bounds, hp: Hyperparams) -> WeekModel:
    rng = np.random.default_rng(hp.seed)

    def he(shape, fan_in):
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

    layers = []
    d = INPUT_SIZE
    for _ in range(hp.hidden_layers):
        h = hp.hidden_size
        layers.append(LstmLayerParams(
            w_xf=he((h, d), d), w_xi=he((h, d), d),
            w_xj=he((h, d), d), w_xo=he((h, d), d),
            w_hf=he((h, h), h), w_hi=he((h, h), h),
            w_hj=he((h, h), h), w_ho=he((h, h), h),
            b_f=np.zeros(h), b_i=np.zeros(h),
            b_j=np.zeros(h), b_o=np.zeros(h),
        ))
        d = h
    return WeekModel(
        week_index=week_index,
        week_len=week_len,
        layers=tuple(layers),
        w_out=he((OUTPUT_SIZE, d), d),
        b_out=np.zeros(OUTPUT_SIZE),
        bounds=bounds,
        training_meta={"seed": hp.seed},
    )


def _all_tensors(model: WeekModel) -> list[tuple[str, np.ndarray]]:
    out = []
    for k, layer in enumerate(model.layers):
        for gate in _GATES:
            out.append((f"l{k}.w_x{gate}", getattr(layer, f"w_x{gate}")))
            out.append((f"l{k}.w_h{gate}", getattr(layer, f"w_h{gate}")))
            out.append((f"l{k}.b_{gate}", getattr(layer, f"b_{gate}")))
    out.append(("w_out", model.w_out))
    out.append(("b_out", model.b_out))
    return out


def _weight_names(model: WeekModel) -> set[str]:
    return {name for name, _ in _all_tensors(model) if not ".b_" in name
            and name != "b_out"}


def training_loss_and_grads(
    model: WeekModel, vn: np.ndarray, targets_n: np.ndarray, l2_rate: float,
    channel_weights: np.ndarray | None = None,
    day_weights: np.ndarray | None = None,
    recycle_noise: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and analytic gradients on normalized data.

    Loss is the mean squared error over every day's three outputs plus an
    L2 penalty on the weight matrices (biases excluded). Gradients flow
    through both the state recurrence and the prediction-recycling path.
    ``channel_weights`` (3,) and ``day_weights`` (week_len,) rescale the
    error terms (means kept at 1 by the caller); None means uniform.
    """
    n, ws = targets_n.shape[0], model.week_len
    cw = np.ones(OUTPUT_SIZE) if channel_weights is None else channel_weights
    dw = np.ones(ws) if day_weights is None else day_weights
    outputs, cache = _forward_norm(model, vn, with_cache=True,
                                   recycle_noise=recycle_noise)
    err = outputs - targets_n.reshape(n, ws, OUTPUT_SIZE)
    # mean over the week's days and outputs, summed over samples: one
    # full-batch step then equals the accumulation of per-sample steps
    denom = ws * OUTPUT_SIZE
    mse = float(np.sum(err**2 * cw * dw[:, None]) / denom)

    grads = {name: np.zeros_like(arr) for name, arr in _all_tensors(model)}
    n_layers = len(model.layers)
    dh_next = [np.zeros((n, layer.hidden_size)) for layer in model.layers]
    dc_next = [np.zeros((n, layer.hidden_size)) for layer in model.layers]
    dy_recycle = np.zeros((n, OUTPUT_SIZE))

    for t in range(ws, 0, -1):
        step_cache, z, h_top = cache[t - 1]
        dy = 2.0 * cw * dw[t - 1] * err[:, t - 1] / denom + dy_recycle
        dz = dy * (z > 0)
        grads["w_out"] += dz.T @ h_top
        grads["b_out"] += dz.sum(axis=0)
        d_from_above = dz @ model.w_out

        for k in range(n_layers - 1, -1, -1):
            layer = model.layers[k]
            x, h_prev, c_prev, f, i, j, o, c = step_cache[k]
            dh = d_from_above + dh_next[k]
            do = dh * softsign(c)
            dc = dh * o * dsoftsign(c) + dc_next[k]
            df = dc * c_prev
            di = dc * j
            dj = dc * i
            dc_next[k] = dc * f
            da = {
                "f": df * f * (1.0 - f),
                "i": di * (1.0 - np.abs(i)) ** 2,
                "j": dj * j * (1.0 - j),
                "o": do * o * (1.0 - o),
            }
            dx = np.zeros_like(x)
            dh_prev = np.zeros_like(h_prev)
            for gate in _GATES:
                g = da[gate]
                grads[f"l{k}.w_x{gate}"] += g.T @ x
                grads[f"l{k}.w_h{gate}"] += g.T @ h_prev
                grads[f"l{k}.b_{gate}"] += g.sum(axis=0)
                dx += g @ getattr(layer, f"w_x{gate}")
                dh_prev += g @ getattr(layer, f"w_h{gate}")
            dh_next[k] = dh_prev
            d_from_above = dx
        # dx of the bottom layer covers [plan(7), recycled outputs(3)]
        dy_recycle = d_from_above[:, 7:10] if t > 1 else np.zeros((n, OUTPUT_SIZE))

    l2 = 0.0
    if l2_rate > 0:
        weight_names = _weight_names(model)
        for name, arr in _all_tensors(model):
            if name in weight_names:
                l2 += float(np.sum(arr**2))
                grads[name] += 2.0 * l2_rate * arr
    return mse + l2_rate * l2, grads


def _resolve_dataset(week_dataset) -> tuple[int, np.ndarray, np.ndarray]:
    if isinstance(week_dataset, WeeklyDataset):
        return week_dataset.week_index, week_dataset.inputs, week_dataset.targets
    inputs, targets = week_dataset
    return 0, np.asarray(inputs, dtype=float), np.asarray(targets, dtype=float)


def train_week_model(
    week_dataset,
    hp: Hyperparams = Hyperparams(),
    bounds: Bounds | None = None,
) -> WeekModel:
    """Fit one weekly model with full-batch gradient descent.

    ``week_dataset`` is a :class:`WeeklyDataset` or a bare (inputs, targets)
    pair; bounds default to the dataset's observed ranges. Deterministic for
    a fixed seed.
    """
    week_index, inputs, targets = _resolve_dataset(week_dataset)
    ws = (inputs.shape[1] - 3) // 7
    if bounds is None:
        bounds = ve_bounds_from_matrices(inputs, targets)

    vn_all = minmax_norm(inputs, bounds.maxi, bounds.mini, mode="strict")
    span = bounds.maxi[7:10] - bounds.mini[7:10]
    targets_n = ((targets.reshape(-1, OUTPUT_SIZE) - bounds.mini[7:10]) / span
                 ).reshape(targets.shape[0], -1)

    n = vn_all.shape[0]
    batch = hp.batch_size or n
    # the penalty belongs to the epoch objective once, so each mini-step
    # carries only its share
    l2_step = hp.l2_rate * min(batch, n) / n
    cw = None
    if hp.channel_balance:
        # equalize gradient pressure across outputs: a slow-moving channel
        # (tiny normalized variance) would otherwise be the first casualty
        # of weight decay
        var = targets_n.reshape(-1, OUTPUT_SIZE).var(axis=0)
        inv = 1.0 / np.maximum(var, 1e-12)
        cw = inv * (OUTPUT_SIZE / inv.sum())
    dw = None
    if hp.first_day_weight != 1.0:
        # the boundary day is predicted from the seed alone while later days
        # inherit its level through recycling, so it gets 1/week_len of the
        # gradient signal by default; anchoring it fixes the whole week's level
        dw = np.ones(ws)
        dw[0] = hp.first_day_weight
        dw *= ws / dw.sum()
    # jitter climate inputs only: day indices stay exact and the seed slots
    # must keep their full weight, or their learned slope would shrink
    noise_mask = np.ones(vn_all.shape[1])
    noise_mask[[0, 7, 8, 9]] = 0.0
    for t in range(2, ws + 1):
        noise_mask[7 * t - 4] = 0.0

    def _dead_units(m) -> np.ndarray:
        probe = _forward_norm(m, vn_all)
        return np.all(probe.reshape(-1, OUTPUT_SIZE) == 0.0, axis=0)

    # a ReLU output unit whose pre-activation goes negative for every sample
    # stops receiving gradient forever; that can happen at init or, under
    # train-time jitter, mid-run. Detect both and restart from a fresh seed.
    restarts = 0
    model = None
    for attempt in range(16):
        seed = hp.seed + 1_000_003 * attempt
        model = _init_model(week_index, ws, bounds,
                            Hyperparams(**{**hp.__dict__, "seed": seed}))
        if _dead_units(model).any():
            restarts += 1
            log.info("week-%d init: dead output unit, reseeding", week_index)
            continue
        order_rng = np.random.default_rng(seed + 1)
        noise_rng = np.random.default_rng(seed + 2)
        tensors = dict(_all_tensors(model))
        loss = None
        curve = []
        died = False
        for epoch in range(hp.epochs):
            lr = hp.lr0 * hp.lr_decay ** (epoch // hp.decay_every)
            order = order_rng.permutation(n) if batch < n else np.arange(n)
            mse_sum = 0.0
            for lo in range(0, n, batch):
                idx = order[lo:lo + batch]
                vn_step = vn_all[idx]
                if hp.plan_noise > 0:
                    vn_step = vn_step + hp.plan_noise * noise_mask * \
                        noise_rng.standard_normal(vn_step.shape)
                rn = None
                if hp.recycle_noise > 0 and ws > 1:
                    rn = hp.recycle_noise * noise_rng.standard_normal(
                        (len(idx), ws - 1, OUTPUT_SIZE))
                loss, grads = training_loss_and_grads(
                    model, vn_step, targets_n[idx], l2_step, cw, dw, rn
                )
                if not np.isfinite(loss):
                    raise Diverged(epoch, loss)
                mse_sum += loss
                for name, arr in tensors.items():
                    arr -= lr * grads[name]
            if epoch % 25 == 0:
                curve.append(round(mse_sum, 10))
            if epoch % 500 == 499 and _dead_units(model).any():
                died = True
                break
            loss = mse_sum
        if died:
            restarts += 1
            log.info("week-%d epoch %d: output unit died, restarting",
                     week_index, epoch)
            continue
        break
    model.training_meta.update({
        "epochs": hp.epochs,
        "final_loss": loss,
        "loss_curve": curve,
        "restarts": restarts,
        "channel_weights": None if cw is None else [round(w, 6) for w in cw],
    })
    log.info("trained week-%d model: final loss %.3e", week_index, loss)
    return model


def evaluate_r2(model: WeekModel, test_set) -> tuple[float, float, float]:
    """Coefficient of determination per output channel, on normalized data.

    Pools every day of the week across the test flocks; raw inputs outside
    the model bounds are clamped, as live data may exceed training extremes.
    """
    _, inputs, targets = _resolve_dataset(test_set)
    if inputs.shape[0] == 0:
        raise ZeroVariance("empty test set")
    _, traj = forward_week_many(model, inputs, mode="clamp")
    maxi, mini = model.output_bounds
    t_norm = (targets.reshape(-1, OUTPUT_SIZE) - mini) / (maxi - mini)
    p_norm = traj.reshape(-1, OUTPUT_SIZE)
    out = []
    for ch in range(OUTPUT_SIZE):
        ss_tot = float(np.sum((t_norm[:, ch] - t_norm[:, ch].mean()) ** 2))
        if ss_tot == 0:
            raise ZeroVariance(f"constant target column {ch}")
        ss_res = float(np.sum((p_norm[:, ch] - t_norm[:, ch]) ** 2))
        out.append(1.0 - ss_res / ss_tot)
    return tuple(out)


# --- persistence ------------------------------------------------------------

def model_to_json(model: WeekModel) -> str:
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": "week-model",
        "week_index": model.week_index,
        "week_len": model.week_len,
        "layers": [
            {name: getattr(layer, name).tolist()
             for name in ("w_xf", "w_xi", "w_xj", "w_xo",
                          "w_hf", "w_hi", "w_hj", "w_ho",
                          "b_f", "b_i", "b_j", "b_o")}
            for layer in model.layers
        ],
        "w_out": model.w_out.tolist(),
        "b_out": model.b_out.tolist(),
        "bounds": {"mini": model.bounds.mini.tolist(),
                   "maxi": model.bounds.maxi.tolist()},
        "training_meta": model.training_meta,
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> WeekModel:
    doc = json.loads(text)
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION or doc.get("kind") != "week-model":
        raise SchemaVersionError(
            f"unsupported model document (version {version!r}, "
            f"kind {doc.get('kind')!r})"
        )
    layers = tuple(
        LstmLayerParams(**{k: np.asarray(v, dtype=float) for k, v in ld.items()})
        for ld in doc["layers"]
    )
    return WeekModel(
        week_index=doc["week_index"],
        week_len=doc["week_len"],
        layers=layers,
        w_out=np.asarray(doc["w_out"], dtype=float),
        b_out=np.asarray(doc["b_out"], dtype=float),
        bounds=Bounds(np.asarray(doc["bounds"]["mini"], dtype=float),
                      np.asarray(doc["bounds"]["maxi"], dtype=float)),
        training_meta=doc.get("training_meta", {}),
    )


def save_model(model: WeekModel, path: str | Path) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path: str | Path) -> WeekModel:
    return model_from_json(Path(path).read_text())


# Per-week training profiles the pipeline ships with. Full-batch descent with
# a hotter learning rate and far more epochs than the class defaults, plus
# train-time jitter on the climate inputs and (weeks 1-5) on the recycled
# outputs; seeds were fixed where descent lands in a poorly generalizing
# basin on the reference corpus. Week 6 trains without recycle jitter: its
# 5-day window tolerates none.
PRODUCTION_HP: tuple[Hyperparams, ...] = tuple(
    Hyperparams(seed=seed, batch_size=0, lr0=0.02, epochs=15000,
                decay_every=3000, l2_rate=0.003, plan_noise=0.05,
                recycle_noise=rn)
    for seed, rn in ((300, 0.15), (101, 0.15), (202, 0.15),
                     (303, 0.15), (104, 0.15), (105, 0.0))
)


def train_corpus_models(
    samples, profiles: tuple[Hyperparams, ...] = PRODUCTION_HP
) -> tuple[WeekModel, ...]:
    """Train the six weekly models from a corpus of flock samples."""
    weekly = partition_weeks(samples)
    return tuple(
        train_week_model(weekly[w], profiles[w]) for w in range(len(weekly))
    )


def save_week_models(models, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for model in models:
        save_model(model, directory / f"week-{model.week_index}.json")


def load_week_models(directory: str | Path) -> tuple[WeekModel, ...]:
    directory = Path(directory)
    models = [load_model(p) for p in sorted(directory.glob("week-*.json"))]
    models.sort(key=lambda m: m.week_index)
    return tuple(models)
