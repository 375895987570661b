"""End-to-end training loop: SGD with classical momentum, global gradient
clipping, step-decay learning rate, and selectable matching strategy."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import metrics
from .data import EncoderConfig, Scene, encode_scene, jitter_scene
from .decoder import (
    DecoderConfig,
    DecoderParams,
    decode_region,
    decode_region_with_cache,
    decoder_backward,
)
from .loss import loss_gradients, loss_value
from .matching import match_fixed_order, match_firstk, match_hungarian
from .stitching import stitch_image

LOSS_MODES = ("fix", "firstk", "hungarian")


@dataclass
class TrainConfig:
    loss_mode: str = "hungarian"
    alpha: float = 0.03
    lr: float = 0.2
    momentum: float = 0.5
    clip_norm: float = 0.1
    lr_decay: float = 0.8
    decay_every: int = 100_000
    dropout: float = 0.15
    iterations: int = 5_000
    seed: int = 0
    tied_heads: bool = True
    # Desk-scale model/data knobs.
    hidden_dim: int = 32
    steps: int = 5
    grid_size: int = 8
    region_size: float = 64.0
    stride: float = 32.0
    noise_sigma: float = 0.5
    bump_sigma: float = 8.0
    output_tanh: bool = False
    feed_features_every_step: bool = True
    jitter: bool = False
    jitter_max_shift: float = 32.0
    val_every: int = 200
    val_threshold: float = 0.1

    def validate(self) -> "TrainConfig":
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        for name in ("alpha", "lr", "clip_norm", "lr_decay"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        return self

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(
            feature_dim=self.grid_size ** 2,
            hidden_dim=self.hidden_dim,
            steps=self.steps,
            region_size=self.region_size,
            tied_heads=self.tied_heads,
            output_tanh=self.output_tanh,
            feed_features_every_step=self.feed_features_every_step,
        )

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            region_size=self.region_size,
            grid_size=self.grid_size,
            noise_sigma=self.noise_sigma,
            bump_sigma=self.bump_sigma,
        )


@dataclass
class MetricsRow:
    iteration: int
    loss: float
    lr: float
    val_ap: Optional[float] = None


@dataclass
class TrainResult:
    params: DecoderParams
    velocity: DecoderParams
    end_iteration: int
    log: List[MetricsRow] = field(default_factory=list)


def global_norm(grads: DecoderParams) -> float:
    total = 0.0
    for t in grads.named_tensors().values():
        total += float(np.sum(t * t))
    return math.sqrt(total)


def clip_gradients(grads: DecoderParams, clip_norm: float) -> DecoderParams:
    """Rescale all gradients in place so the global 2-norm is at most
    clip_norm. A norm exactly at the limit is left unchanged."""
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    norm = global_norm(grads)
    if norm > clip_norm:
        scale = clip_norm / norm
        for t in grads.named_tensors().values():
            t *= scale
    return grads


def sgd_momentum_step(
    params: DecoderParams,
    velocity: DecoderParams,
    grads: DecoderParams,
    lr: float,
    momentum: float,
) -> None:
    """Classical momentum update, in place: v' = m*v - lr*g; p' = p + v'."""
    p_tensors = params.named_tensors()
    v_tensors = velocity.named_tensors()
    g_tensors = grads.named_tensors()
    for name in p_tensors:
        v = v_tensors[name]
        v *= momentum
        v -= lr * g_tensors[name]
        p_tensors[name] += v


def lr_at(iteration: int, config: TrainConfig) -> float:
    return config.lr * config.lr_decay ** (iteration // config.decay_every)


def match_for_mode(mode: str, gts, candidates):
    if mode == "fix":
        return match_fixed_order(gts, candidates)
    if mode == "firstk":
        return match_firstk(gts, candidates)
    if mode == "hungarian":
        return match_hungarian(gts, candidates)
    raise ValueError(f"unknown loss mode: {mode!r}")


def _accumulate(total: DecoderParams, part: DecoderParams) -> None:
    t_tensors = total.named_tensors()
    for name, tensor in part.named_tensors().items():
        t_tensors[name] += tensor


def scene_predictions(
    params: DecoderParams,
    scene: Scene,
    encoder: EncoderConfig,
    stride: float,
    threshold: float,
):
    """Decode and stitch one scene; returns image-absolute detections."""
    predictions = []
    for sample in encode_scene(scene, encoder, stride):
        pred = decode_region(params, sample.features, region_origin=sample.region_origin)
        predictions.append(pred)
    return stitch_image(predictions, threshold)


def validation_ap(
    params: DecoderParams,
    scenes: Sequence[Scene],
    encoder: EncoderConfig,
    stride: float,
    threshold: float,
) -> float:
    # Validation is noise-free and dropout-free.
    encoder = dataclasses.replace(encoder, noise_sigma=0.0)
    labeled = []
    total_gt = 0
    for scene in scenes:
        detections = scene_predictions(params, scene, encoder, stride, threshold)
        pairs = [(d.geometry, d.confidence) for d in detections]
        labeled.extend(metrics.match_for_eval(pairs, scene.boxes))
        total_gt += len(scene.boxes)
    if total_gt == 0:
        return 0.0
    return metrics.average_precision(metrics.pr_curve(labeled, total_gt))


def train(
    config: TrainConfig,
    train_scenes: Sequence[Scene],
    val_scenes: Sequence[Scene],
    initial_params: Optional[DecoderParams] = None,
    initial_velocity: Optional[DecoderParams] = None,
    start_iteration: int = 0,
) -> TrainResult:
    """Run the optimization loop.

    Each iteration takes one scene, decodes all of its regions, matches
    ground truth to candidates under the configured loss mode, accumulates
    gradients over regions in fixed order, clips, and updates. Deterministic
    given (config, scenes): all randomness flows from config.seed.
    """
    config.validate()
    if not train_scenes:
        raise ValueError("training set is empty")
    dec_cfg = config.decoder_config()
    enc_cfg = config.encoder_config()
    init_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    params = initial_params if initial_params is not None else DecoderParams.initialize(
        dec_cfg, init_rng
    )
    params.check_shapes()
    velocity = initial_velocity if initial_velocity is not None else DecoderParams.zeros(dec_cfg)
    log: List[MetricsRow] = []
    for it in range(start_iteration, start_iteration + config.iterations):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1, it]))
        scene = train_scenes[int(rng.integers(len(train_scenes)))]
        if config.jitter:
            scene = jitter_scene(scene, rng, max_shift=config.jitter_max_shift)
        total_grads = DecoderParams.zeros(dec_cfg)
        total_loss = 0.0
        for sample in encode_scene(scene, enc_cfg, config.stride, rng):
            pred, cache = decode_region_with_cache(
                params,
                sample.features,
                dropout=config.dropout,
                rng=rng,
                training=True,
            )
            matching = match_for_mode(config.loss_mode, sample.ground_truth, pred.candidates)
            breakdown = loss_value(sample.ground_truth, pred.candidates, matching, config.alpha)
            total_loss += breakdown.total
            upstream = loss_gradients(
                sample.ground_truth, pred.candidates, matching, config.alpha
            )
            grads, _ = decoder_backward(params, cache, upstream)
            _accumulate(total_grads, grads)
        if not math.isfinite(total_loss):
            raise RuntimeError(f"training diverged at iteration {it}: loss={total_loss}")
        clip_gradients(total_grads, config.clip_norm)
        sgd_momentum_step(params, velocity, total_grads, lr_at(it, config), config.momentum)
        row = MetricsRow(iteration=it, loss=total_loss, lr=lr_at(it, config))
        if val_scenes and config.val_every > 0 and (it + 1) % config.val_every == 0:
            row.val_ap = validation_ap(
                params, val_scenes, enc_cfg, config.stride, config.val_threshold
            )
        log.append(row)
    return TrainResult(
        params=params,
        velocity=velocity,
        end_iteration=start_iteration + config.iterations,
        log=log,
    )
