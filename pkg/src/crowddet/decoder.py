"""Recurrent box decoder: an LSTM controller emitting a fixed-length
overcomplete candidate sequence from one region feature vector.

Forward and backward passes are written out by hand. The LSTM has no bias
terms and, by default, no squashing on the hidden output (h = o * c); gates
keep their sigmoids and the cell candidate keeps tanh. Input features are
divided by a scale factor before entering the LSTM and position outputs are
multiplied by a scale factor before being interpreted as pixel offsets from
the region center.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np

from .geometry import BoxGeometry
from .matching import Candidate
from .loss import LossGradients

FORMAT_VERSION = 1

GATE_NAMES = ("w_input", "w_forget", "w_output", "w_cell")


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class DecoderConfig:
    feature_dim: int = 64
    hidden_dim: int = 32
    steps: int = 5
    region_size: float = 64.0
    input_scale: float = 100.0
    output_scale: float = 100.0
    tied_heads: bool = True
    output_tanh: bool = False  # tanh on the cell at the hidden output
    feed_features_every_step: bool = True
    init_range: float = 0.1

    @property
    def n_heads(self) -> int:
        return 1 if self.tied_heads else self.steps


@dataclass
class DecoderParams:
    """All trainable weights: four gate matrices over [features + previous
    hidden] and one output head per step (or one shared head)."""

    config: DecoderConfig
    w_input: np.ndarray
    w_forget: np.ndarray
    w_output: np.ndarray
    w_cell: np.ndarray
    heads: List[np.ndarray]

    @classmethod
    def initialize(cls, config: DecoderConfig, rng: np.random.Generator) -> "DecoderParams":
        f, h, r = config.feature_dim, config.hidden_dim, config.init_range
        gates = [rng.uniform(-r, r, size=(h, f + h)) for _ in GATE_NAMES]
        heads = [rng.uniform(-r, r, size=(5, h)) for _ in range(config.n_heads)]
        return cls(config, *gates, heads=heads)

    @classmethod
    def zeros(cls, config: DecoderConfig) -> "DecoderParams":
        f, h = config.feature_dim, config.hidden_dim
        gates = [np.zeros((h, f + h)) for _ in GATE_NAMES]
        heads = [np.zeros((5, h)) for _ in range(config.n_heads)]
        return cls(config, *gates, heads=heads)

    def head_for_step(self, step: int) -> np.ndarray:
        return self.heads[0] if self.config.tied_heads else self.heads[step]

    def named_tensors(self) -> Dict[str, np.ndarray]:
        tensors = {name: getattr(self, name) for name in GATE_NAMES}
        for k, head in enumerate(self.heads):
            tensors[f"head_{k}"] = head
        return tensors

    def check_shapes(self):
        f, h = self.config.feature_dim, self.config.hidden_dim
        for name in GATE_NAMES:
            if getattr(self, name).shape != (h, f + h):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}")
        if len(self.heads) != self.config.n_heads:
            raise ValueError("wrong number of output heads")
        for head in self.heads:
            if head.shape != (5, h):
                raise ValueError(f"head has shape {head.shape}")


@dataclass
class DecoderState:
    cell: np.ndarray
    hidden: np.ndarray
    step: int = 0

    @classmethod
    def zero(cls, config: DecoderConfig) -> "DecoderState":
        return cls(np.zeros(config.hidden_dim), np.zeros(config.hidden_dim), 0)


@dataclass
class RegionPrediction:
    """Ordered candidate list for one region, in region-relative pixels."""

    candidates: List[Candidate]
    region_origin: Tuple[float, float] = (0.0, 0.0)


@dataclass
class _StepCache:
    z: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    cell_prev: np.ndarray
    cell: np.ndarray
    hidden_raw: np.ndarray
    mask: np.ndarray
    hidden: np.ndarray
    raw_output: np.ndarray


@dataclass
class ForwardCache:
    features: np.ndarray
    steps: List[_StepCache] = field(default_factory=list)


def lstm_step(
    params: DecoderParams, state: DecoderState, features: np.ndarray
) -> Tuple[DecoderState, np.ndarray]:
    """One recurrence: gate update from [features + previous hidden], then
    the output head of the current step. Returns the new state and the raw
    5-vector (four unscaled positions and one confidence logit)."""
    cfg = params.config
    features = np.asarray(features, dtype=float)
    if features.shape != (cfg.feature_dim,):
        raise ValueError(
            f"expected feature vector of shape ({cfg.feature_dim},), got {features.shape}"
        )
    z = np.concatenate([features, state.hidden])
    i = sigmoid(params.w_input @ z)
    f = sigmoid(params.w_forget @ z)
    o = sigmoid(params.w_output @ z)
    g = np.tanh(params.w_cell @ z)
    cell = i * g + f * state.cell
    hidden = o * (np.tanh(cell) if cfg.output_tanh else cell)
    raw = params.head_for_step(state.step) @ hidden
    return DecoderState(cell, hidden, state.step + 1), raw


def apply_dropout(
    hidden: np.ndarray,
    rate: float,
    rng: Optional[np.random.Generator],
    training: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """Inverted dropout: zero entries with probability `rate` and rescale the
    survivors by 1/(1-rate). Identity outside training or at rate 0."""
    if not training or rate == 0.0:
        mask = np.ones_like(hidden)
        return hidden, mask
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = 1.0 - rate
    mask = (rng.random(hidden.shape) >= rate) / keep
    return hidden * mask, mask


def _candidate_from_raw(raw: np.ndarray, rank: int, cfg: DecoderConfig) -> Candidate:
    half = cfg.region_size / 2.0
    s = cfg.output_scale
    geometry = BoxGeometry(
        x=half + s * raw[0],
        y=half + s * raw[1],
        w=s * raw[2],
        h=s * raw[3],
    )
    return Candidate(geometry=geometry, confidence=float(sigmoid(raw[4])), rank=rank)


def decode_region(
    params: DecoderParams,
    features: np.ndarray,
    steps: Optional[int] = None,
    region_origin: Tuple[float, float] = (0.0, 0.0),
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> RegionPrediction:
    prediction, _ = decode_region_with_cache(
        params, features, steps, region_origin, dropout, rng, training
    )
    return prediction


def decode_region_with_cache(
    params: DecoderParams,
    features: np.ndarray,
    steps: Optional[int] = None,
    region_origin: Tuple[float, float] = (0.0, 0.0),
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> Tuple[RegionPrediction, ForwardCache]:
    """Run the full decoding sequence from a zero state, caching every
    intermediate needed by decoder_backward."""
    cfg = params.config
    steps = cfg.steps if steps is None else steps
    features = np.asarray(features, dtype=float)
    scaled = features / cfg.input_scale
    zero_features = np.zeros_like(scaled)
    state = DecoderState.zero(cfg)
    cache = ForwardCache(features=features)
    candidates = []
    for t in range(steps):
        x = scaled if (cfg.feed_features_every_step or t == 0) else zero_features
        z = np.concatenate([x, state.hidden])
        i = sigmoid(params.w_input @ z)
        f = sigmoid(params.w_forget @ z)
        o = sigmoid(params.w_output @ z)
        g = np.tanh(params.w_cell @ z)
        cell = i * g + f * state.cell
        hidden_raw = o * (np.tanh(cell) if cfg.output_tanh else cell)
        hidden, mask = apply_dropout(hidden_raw, dropout, rng, training)
        raw = params.head_for_step(t) @ hidden
        cache.steps.append(
            _StepCache(z, i, f, o, g, state.cell, cell, hidden_raw, mask, hidden, raw)
        )
        candidates.append(_candidate_from_raw(raw, rank=t + 1, cfg=cfg))
        state = DecoderState(cell, hidden, t + 1)
    return RegionPrediction(candidates, region_origin), cache


def threshold_cutoff(prediction: RegionPrediction, threshold: float) -> List[Candidate]:
    """Prefix of candidates emitted before the first sub-threshold confidence
    (the stop symbol)."""
    kept = []
    for cand in prediction.candidates:
        if cand.confidence < threshold:
            break
        kept.append(cand)
    return kept


def decoder_backward(
    params: DecoderParams,
    cache: ForwardCache,
    upstream: LossGradients,
) -> Tuple[DecoderParams, np.ndarray]:
    """Reverse-mode gradients through all decoding steps.

    `upstream` holds per-candidate gradients w.r.t. pixel positions and
    confidence logits. Returns gradients in DecoderParams layout plus the
    gradient w.r.t. the unscaled input features.
    """
    cfg = params.config
    if not cache.steps:
        raise ValueError("forward cache is empty")
    steps = len(cache.steps)
    grads = DecoderParams.zeros(cfg)
    d_x_total = np.zeros(cfg.feature_dim)
    d_hidden_next = np.zeros(cfg.hidden_dim)  # via the next step's input
    d_cell_next = np.zeros(cfg.hidden_dim)
    for t in reversed(range(steps)):
        sc = cache.steps[t]
        d_raw = np.empty(5)
        d_raw[:4] = cfg.output_scale * np.asarray(upstream.d_positions[t])
        d_raw[4] = upstream.d_confidence_logits[t]
        head = params.head_for_step(t)
        head_index = 0 if cfg.tied_heads else t
        grads.heads[head_index] += np.outer(d_raw, sc.hidden)
        d_hidden = head.T @ d_raw + d_hidden_next
        d_hidden_raw = d_hidden * sc.mask
        if cfg.output_tanh:
            tc = np.tanh(sc.cell)
            d_o = d_hidden_raw * tc
            d_cell = d_hidden_raw * sc.o * (1.0 - tc * tc) + d_cell_next
        else:
            d_o = d_hidden_raw * sc.cell
            d_cell = d_hidden_raw * sc.o + d_cell_next
        d_i = d_cell * sc.g
        d_g = d_cell * sc.i
        d_f = d_cell * sc.cell_prev
        d_cell_next = d_cell * sc.f
        d_ai = d_i * sc.i * (1.0 - sc.i)
        d_af = d_f * sc.f * (1.0 - sc.f)
        d_ao = d_o * sc.o * (1.0 - sc.o)
        d_ag = d_g * (1.0 - sc.g * sc.g)
        grads.w_input += np.outer(d_ai, sc.z)
        grads.w_forget += np.outer(d_af, sc.z)
        grads.w_output += np.outer(d_ao, sc.z)
        grads.w_cell += np.outer(d_ag, sc.z)
        d_z = (
            params.w_input.T @ d_ai
            + params.w_forget.T @ d_af
            + params.w_output.T @ d_ao
            + params.w_cell.T @ d_ag
        )
        if cfg.feed_features_every_step or t == 0:
            d_x_total += d_z[: cfg.feature_dim]
        d_hidden_next = d_z[cfg.feature_dim :]
    d_features = d_x_total / cfg.input_scale
    return grads, d_features


def _tensor_records(params: DecoderParams) -> dict:
    return {
        name: {"shape": list(t.shape), "data": t.ravel().tolist()}
        for name, t in params.named_tensors().items()
    }


def _load_tensors(config: DecoderConfig, records: dict) -> DecoderParams:
    params = DecoderParams.zeros(config)
    for name, target in params.named_tensors().items():
        entry = records[name]
        arr = np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
        if arr.shape != target.shape:
            raise ValueError(f"tensor {name} has shape {arr.shape}, expected {target.shape}")
        target[...] = arr
    return params


def save_checkpoint(
    params: DecoderParams,
    path,
    velocity: Optional[DecoderParams] = None,
    iteration: int = 0,
) -> None:
    """Serialize parameters (and, for training resume, optimizer velocity)
    as JSON: named tensors with explicit shapes and a format version."""
    record = {
        "format_version": FORMAT_VERSION,
        "config": asdict(params.config),
        "iteration": iteration,
        "tensors": _tensor_records(params),
    }
    if velocity is not None:
        record["velocity"] = _tensor_records(velocity)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True)
        fh.write("\n")


@dataclass
class Checkpoint:
    params: DecoderParams
    velocity: Optional[DecoderParams]
    iteration: int


def load_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    version = record.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version: {version!r}")
    config = DecoderConfig(**record["config"])
    params = _load_tensors(config, record["tensors"])
    velocity = None
    if "velocity" in record:
        velocity = _load_tensors(config, record["velocity"])
    return Checkpoint(params, velocity, int(record.get("iteration", 0)))
