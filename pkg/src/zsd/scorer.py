"""Recurrent anomaly scorer: an Elman network trained by SGD with BPTT.

Given an entity's recent feature-vector sequence the network produces a
score in (0,1):

    h_t   = tanh(Wx x_t + Wh h_{t-1} + bh),  h_0 = 0
    score = sigmoid(wo . h_T + bo)

Loss is binary cross-entropy with the score clamped to [1e-7, 1-1e-7].
Training is plain per-example SGD with global gradient-norm clipping and a
seeded shuffle per epoch, so a (dataset, config) pair always yields the
same parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .types import FeatureVector, FEATURE_COUNT, ZsdError

SCORE_CLAMP = 1e-7
MODEL_MAGIC = "ZSDMODEL"
MODEL_VERSION = 1


class DimensionError(ZsdError):
    """Sequence element length does not match the model's input size."""


class DegenerateDataError(ZsdError):
    """Training set lacks one of the two labels."""


@dataclass
class ScorerModel:
    """Network parameters. Immutable by convention once trained."""

    Wx: np.ndarray   # (H, F)
    Wh: np.ndarray   # (H, H)
    bh: np.ndarray   # (H,)
    wo: np.ndarray   # (H,)
    bo: float
    hidden: int
    inputs: int = FEATURE_COUNT

    @classmethod
    def zeros(cls, hidden: int, inputs: int = FEATURE_COUNT) -> "ScorerModel":
        return cls(
            Wx=np.zeros((hidden, inputs)),
            Wh=np.zeros((hidden, hidden)),
            bh=np.zeros(hidden),
            wo=np.zeros(hidden),
            bo=0.0,
            hidden=hidden,
            inputs=inputs,
        )

    @classmethod
    def seeded(cls, hidden: int, seed: int, scale: float = 0.1,
               inputs: int = FEATURE_COUNT) -> "ScorerModel":
        rng = np.random.default_rng(seed)
        return cls(
            Wx=rng.uniform(-scale, scale, (hidden, inputs)),
            Wh=rng.uniform(-scale, scale, (hidden, hidden)),
            bh=rng.uniform(-scale, scale, hidden),
            wo=rng.uniform(-scale, scale, hidden),
            bo=float(rng.uniform(-scale, scale)),
            hidden=hidden,
            inputs=inputs,
        )

    def copy(self) -> "ScorerModel":
        return ScorerModel(
            Wx=self.Wx.copy(), Wh=self.Wh.copy(), bh=self.bh.copy(),
            wo=self.wo.copy(), bo=self.bo, hidden=self.hidden, inputs=self.inputs,
        )


@dataclass
class TrainConfig:
    lr: float = 0.05
    epochs: int = 30
    clip_norm: float = 5.0
    seed: int = 1
    hidden: int = 32
    init_scale: float = 0.1   # 0 gives an all-zero initialization

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")


def _seq_matrix(seq: Sequence[FeatureVector] | np.ndarray, inputs: int) -> np.ndarray:
    if isinstance(seq, np.ndarray):
        if seq.ndim != 2 or seq.shape[1] != inputs:
            raise DimensionError(f"sequence shape {seq.shape}, expected (*, {inputs})")
        if seq.shape[0] < 1:
            raise DimensionError("sequence must hold at least one vector")
        return seq
    rows = []
    for x in seq:
        vals = x.values if isinstance(x, FeatureVector) else x
        if len(vals) != inputs:
            raise DimensionError(f"vector length {len(vals)}, expected {inputs}")
        rows.append(vals)
    if not rows:
        raise DimensionError("sequence must hold at least one vector")
    return np.asarray(rows, dtype=np.float64)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def forward(model: ScorerModel, seq: Sequence[FeatureVector] | np.ndarray) -> float:
    """Anomaly score in (0,1) for the sequence; pure and deterministic."""
    xs = _seq_matrix(seq, model.inputs)
    pre = xs @ model.Wx.T + model.bh
    h = np.zeros(model.hidden)
    Wh = model.Wh
    for t in range(xs.shape[0]):
        h = np.tanh(pre[t] + Wh @ h)
    return _sigmoid(float(model.wo @ h) + model.bo)


def loss(score: float, label: int) -> float:
    """Binary cross-entropy with the score clamped away from {0,1}."""
    s = min(max(score, SCORE_CLAMP), 1.0 - SCORE_CLAMP)
    if label:
        return -math.log(s)
    return -math.log(1.0 - s)


@dataclass
class Gradient:
    Wx: np.ndarray
    Wh: np.ndarray
    bh: np.ndarray
    wo: np.ndarray
    bo: float

    def norm(self) -> float:
        total = (
            float(np.sum(self.Wx * self.Wx))
            + float(np.sum(self.Wh * self.Wh))
            + float(np.sum(self.bh * self.bh))
            + float(np.sum(self.wo * self.wo))
            + self.bo * self.bo
        )
        return math.sqrt(total)


def grad(
    model: ScorerModel,
    seq: Sequence[FeatureVector] | np.ndarray,
    label: int,
) -> tuple[Gradient, float, float]:
    """Exact gradient of loss(forward(seq), label) by backprop through time.

    Returns (gradient, score, loss).
    """
    xs = _seq_matrix(seq, model.inputs)
    T = xs.shape[0]
    H = model.hidden

    hs = np.empty((T + 1, H))
    hs[0] = 0.0
    pre = xs @ model.Wx.T + model.bh
    for t in range(T):
        hs[t + 1] = np.tanh(pre[t] + model.Wh @ hs[t])

    z = float(model.wo @ hs[T]) + model.bo
    s = _sigmoid(z)
    s_clamped = min(max(s, SCORE_CLAMP), 1.0 - SCORE_CLAMP)
    ell = loss(s, label)

    # d loss / d z; zero when the clamp is active (loss locally flat in s)
    if s != s_clamped:
        dz = 0.0
    else:
        dz = s - float(label)

    dWx = np.zeros_like(model.Wx)
    dWh = np.zeros_like(model.Wh)
    dbh = np.zeros_like(model.bh)
    dwo = dz * hs[T]
    dbo = dz

    dh = dz * model.wo
    WhT = model.Wh.T
    for t in range(T - 1, -1, -1):
        dtanh = dh * (1.0 - hs[t + 1] * hs[t + 1])
        dWx += np.outer(dtanh, xs[t])
        dWh += np.outer(dtanh, hs[t])
        dbh += dtanh
        dh = WhT @ dtanh
    return Gradient(Wx=dWx, Wh=dWh, bh=dbh, wo=dwo, bo=dbo), s, ell


@dataclass
class TrainResult:
    model: ScorerModel
    epoch_losses: list[float] = field(default_factory=list)


def train(
    dataset: list[tuple[Sequence[FeatureVector] | np.ndarray, int]],
    cfg: TrainConfig,
) -> TrainResult:
    """Per-example SGD over the dataset; deterministic for (dataset, cfg).

    epoch_losses[0] is the mean loss of the initial parameters over the
    dataset; epoch_losses[e] for e >= 1 is the mean pre-update loss seen
    during epoch e. Raises DegenerateDataError unless both labels occur.
    """
    if not dataset:
        raise DegenerateDataError("empty training set")
    labels = {int(bool(lbl)) for _, lbl in dataset}
    if labels != {0, 1}:
        raise DegenerateDataError("training set must contain both labels")

    seqs = [_seq_matrix(s, FEATURE_COUNT if not isinstance(s, np.ndarray) else s.shape[1])
            for s, _ in dataset]
    inputs = seqs[0].shape[1]
    for m in seqs:
        if m.shape[1] != inputs:
            raise DimensionError("inconsistent vector lengths in training set")
    ys = [int(bool(lbl)) for _, lbl in dataset]

    rng = np.random.default_rng(cfg.seed)
    if cfg.init_scale > 0:
        model = ScorerModel(
            Wx=rng.uniform(-cfg.init_scale, cfg.init_scale, (cfg.hidden, inputs)),
            Wh=rng.uniform(-cfg.init_scale, cfg.init_scale, (cfg.hidden, cfg.hidden)),
            bh=rng.uniform(-cfg.init_scale, cfg.init_scale, cfg.hidden),
            wo=rng.uniform(-cfg.init_scale, cfg.init_scale, cfg.hidden),
            bo=float(rng.uniform(-cfg.init_scale, cfg.init_scale)),
            hidden=cfg.hidden,
            inputs=inputs,
        )
    else:
        model = ScorerModel.zeros(cfg.hidden, inputs)

    start_loss = sum(loss(forward(model, s), y) for s, y in zip(seqs, ys)) / len(seqs)
    trace = [start_loss]

    order = np.arange(len(seqs))
    for _ in range(cfg.epochs):
        rng.shuffle(order)
        total = 0.0
        for i in order:
            g, _, ell = grad(model, seqs[i], ys[i])
            total += ell
            gnorm = g.norm()
            scale = cfg.lr
            if gnorm > cfg.clip_norm:
                scale = cfg.lr * (cfg.clip_norm / gnorm)
            model.Wx -= scale * g.Wx
            model.Wh -= scale * g.Wh
            model.bh -= scale * g.bh
            model.wo -= scale * g.wo
            model.bo -= scale * g.bo
        trace.append(total / len(seqs))
    return TrainResult(model=model, epoch_losses=trace)


def save_model(model: ScorerModel, path: str) -> None:
    """Versioned text format; 17 significant digits round-trips float64 exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MODEL_MAGIC} {MODEL_VERSION} {model.hidden} {model.inputs}\n")
        def row(vals) -> str:
            return " ".join(f"{v:.17g}" for v in vals)
        for r in model.Wx:
            fh.write(row(r) + "\n")
        for r in model.Wh:
            fh.write(row(r) + "\n")
        fh.write(row(model.bh) + "\n")
        fh.write(row(model.wo) + "\n")
        fh.write(f"{model.bo:.17g}\n")


class ModelFormatError(ZsdError):
    """Model file is missing, truncated, or malformed."""


def load_model(path: str) -> ScorerModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise ModelFormatError("empty model file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != MODEL_MAGIC:
        raise ModelFormatError(f"bad header {lines[0]!r}")
    if int(head[1]) != MODEL_VERSION:
        raise ModelFormatError(f"unsupported version {head[1]}")
    hidden, inputs = int(head[2]), int(head[3])
    expected = hidden + hidden + 1 + 1 + 1
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != expected:
        raise ModelFormatError(f"expected {expected} parameter rows, found {len(body)}")

    def parse_row(line: str, width: int) -> np.ndarray:
        vals = np.array([float(v) for v in line.split()], dtype=np.float64)
        if vals.shape[0] != width:
            raise ModelFormatError(f"row width {vals.shape[0]}, expected {width}")
        return vals

    idx = 0
    Wx = np.stack([parse_row(body[idx + i], inputs) for i in range(hidden)]); idx += hidden
    Wh = np.stack([parse_row(body[idx + i], hidden) for i in range(hidden)]); idx += hidden
    bh = parse_row(body[idx], hidden); idx += 1
    wo = parse_row(body[idx], hidden); idx += 1
    bo = float(body[idx])
    return ScorerModel(Wx=Wx, Wh=Wh, bh=bh, wo=wo, bo=bo, hidden=hidden, inputs=inputs)
