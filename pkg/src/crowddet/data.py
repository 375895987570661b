"""Synthetic crowded-scene data: generation, feature encoding, and file IO.

Scenes are flat collections of ground-truth boxes on a blank image. A fixed
(non-learned) rasterizer stands in for a CNN encoder: each region is
summarized by a grid of Gaussian bumps placed at box centers with amplitude
proportional to box area. Scene and prediction files are newline-delimited
JSON, one record per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import BoxGeometry, intersects


@dataclass
class Scene:
    id: str
    width: float
    height: float
    boxes: List[BoxGeometry]


@dataclass
class RegionSample:
    """One region's feature vector plus its region-relative ground truth."""

    features: np.ndarray
    ground_truth: List[BoxGeometry]
    region_origin: Tuple[float, float]


@dataclass(frozen=True)
class SceneConfig:
    width: float = 64.0
    height: float = 64.0
    # Weight of drawing k boxes, k = index. Defaults allow 0..4 instances.
    count_weights: Tuple[float, ...] = (1.0, 2.0, 2.0, 2.0, 1.0)
    min_box_size: float = 12.0
    max_box_size: float = 24.0
    # Fraction of multi-box scenes given one deliberately intersecting pair;
    # other boxes are rejection-sampled to stay disjoint.
    overlap_fraction: float = 0.3
    # Vertical offset cap for the deliberate pair, in pixels. Small values
    # put the pair side by side with nearly equal y, where a canonical
    # top-to-bottom ordering is unstable.
    overlap_y_jitter: float = 2.0
    max_place_tries: int = 50

    def validate(self):
        if self.max_box_size > min(self.width, self.height):
            raise ValueError("boxes larger than the image are infeasible")
        if self.min_box_size <= 0 or self.min_box_size > self.max_box_size:
            raise ValueError("invalid box size range")
        return self


@dataclass(frozen=True)
class EncoderConfig:
    region_size: float = 64.0
    grid_size: int = 8  # feature_dim = grid_size ** 2
    bump_sigma: float = 8.0
    amplitude_per_area: float = 0.2
    noise_sigma: float = 0.0
    # Boxes centered within this margin outside the region still contribute
    # bumps (receptive field larger than the region, like a CNN's).
    receptive_margin: float = 32.0

    @property
    def feature_dim(self) -> int:
        return self.grid_size ** 2


def _sample_box_size(rng: np.random.Generator, cfg: SceneConfig) -> Tuple[float, float]:
    w = rng.uniform(cfg.min_box_size, cfg.max_box_size)
    h = rng.uniform(cfg.min_box_size, cfg.max_box_size)
    return w, h


def _uniform_center(rng, cfg: SceneConfig, w: float, h: float) -> Tuple[float, float]:
    x = rng.uniform(w / 2.0, cfg.width - w / 2.0)
    y = rng.uniform(h / 2.0, cfg.height - h / 2.0)
    return x, y


def generate_scene(rng: np.random.Generator, config: SceneConfig, scene_id: str = "scene") -> Scene:
    """Sample one scene. Deterministic given the generator state."""
    config.validate()
    weights = np.asarray(config.count_weights, dtype=float)
    count = int(rng.choice(len(weights), p=weights / weights.sum()))
    boxes: List[BoxGeometry] = []
    overlap_pair = count >= 2 and rng.random() < config.overlap_fraction
    for k in range(count):
        w, h = _sample_box_size(rng, config)
        if overlap_pair and k == 1:
            # Partner of the first box: offset small enough that the pair
            # intersects even after clamping back inside the image.
            first = boxes[0]
            # Wide-but-still-intersecting horizontal offset: the pair stays
            # a genuine occlusion, not a near-duplicate.
            span = (first.w + w) / 2.0
            dx = rng.uniform(0.6 * span, 0.95 * span) * (1 if rng.random() < 0.5 else -1)
            dy_cap = min(config.overlap_y_jitter, (first.h + h) / 4.0)
            dy = rng.uniform(-dy_cap, dy_cap)
            x = min(max(first.x + dx, w / 2.0), config.width - w / 2.0)
            y = min(max(first.y + dy, h / 2.0), config.height - h / 2.0)
            boxes.append(BoxGeometry(x, y, w, h).validate())
            continue
        placed = None
        for _ in range(config.max_place_tries):
            x, y = _uniform_center(rng, config, w, h)
            candidate = BoxGeometry(x, y, w, h)
            if not any(intersects(candidate, b) for b in boxes):
                placed = candidate
                break
        if placed is None:  # crowded config; accept an accidental overlap
            x, y = _uniform_center(rng, config, w, h)
            placed = BoxGeometry(x, y, w, h)
        boxes.append(placed.validate())
    return Scene(id=scene_id, width=config.width, height=config.height, boxes=boxes)


def generate_scenes(
    seed: int, count: int, config: SceneConfig, id_prefix: str = "scene"
) -> List[Scene]:
    """Per-scene derived seeds keep generation order-independent."""
    scenes = []
    for k in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        scenes.append(generate_scene(rng, config, scene_id=f"{id_prefix}-{k:06d}"))
    return scenes


def jitter_scene(
    scene: Scene,
    rng: np.random.Generator,
    max_shift: float = 32.0,
    scale_range: Tuple[float, float] = (0.9, 1.1),
) -> Scene:
    """Augmentation: random translation and isotropic scaling about the image
    center. Boxes whose centers leave the image are dropped."""
    dx = rng.uniform(-max_shift, max_shift)
    dy = rng.uniform(-max_shift, max_shift)
    s = rng.uniform(*scale_range)
    cx, cy = scene.width / 2.0, scene.height / 2.0
    boxes = []
    for b in scene.boxes:
        x = cx + s * (b.x - cx) + dx
        y = cy + s * (b.y - cy) + dy
        if 0.0 <= x <= scene.width and 0.0 <= y <= scene.height:
            boxes.append(BoxGeometry(x, y, s * b.w, s * b.h))
    return Scene(scene.id, scene.width, scene.height, boxes)


def region_origins(
    width: float, height: float, region_size: float = 64.0, stride: float = 32.0
) -> List[Tuple[float, float]]:
    """Row-major grid of region origins covering the image."""
    xs = _axis_origins(width, region_size, stride)
    ys = _axis_origins(height, region_size, stride)
    return [(x, y) for y in ys for x in xs]


def _axis_origins(extent: float, region_size: float, stride: float) -> List[float]:
    if extent <= region_size:
        return [0.0]
    out = []
    pos = 0.0
    while pos + region_size <= extent + 1e-9:
        out.append(pos)
        pos += stride
    if out[-1] + region_size < extent - 1e-9:
        out.append(extent - region_size)
    return out


def encode_region(
    scene: Scene,
    region_origin: Tuple[float, float],
    config: EncoderConfig,
    rng: Optional[np.random.Generator] = None,
) -> RegionSample:
    """Rasterize one region of a scene into a feature vector.

    The feature grid covers the region; every box whose center lies within
    the receptive field adds a Gaussian bump at its center with amplitude
    proportional to its area. Ground truth is the subset of boxes whose
    centers fall inside the region proper, in region-relative coordinates.
    """
    ox, oy = region_origin
    g = config.grid_size
    r = config.region_size
    cell = r / g
    centers = (np.arange(g) + 0.5) * cell
    grid = np.zeros((g, g))
    margin = config.receptive_margin
    ground_truth: List[BoxGeometry] = []
    for b in scene.boxes:
        u, v = b.x - ox, b.y - oy
        if -margin <= u <= r + margin and -margin <= v <= r + margin:
            amp = config.amplitude_per_area * b.w * b.h
            dy2 = (centers - v) ** 2
            dx2 = (centers - u) ** 2
            grid += amp * np.exp(
                -(dy2[:, None] + dx2[None, :]) / (2.0 * config.bump_sigma ** 2)
            )
        if 0.0 <= u <= r and 0.0 <= v <= r:
            ground_truth.append(BoxGeometry(u, v, b.w, b.h))
    features = grid.ravel()
    if config.noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        features = features + rng.normal(0.0, config.noise_sigma, size=features.shape)
    return RegionSample(features, ground_truth, (float(ox), float(oy)))


def encode_scene(
    scene: Scene,
    config: EncoderConfig,
    stride: float = 32.0,
    rng: Optional[np.random.Generator] = None,
) -> List[RegionSample]:
    return [
        encode_region(scene, origin, config, rng)
        for origin in region_origins(scene.width, scene.height, config.region_size, stride)
    ]


# ---------------------------------------------------------------------------
# File formats (newline-delimited JSON, UTF-8)


def _box_record(b: BoxGeometry) -> dict:
    return {"x": b.x, "y": b.y, "w": b.w, "h": b.h}


def write_scenes(scenes: Sequence[Scene], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in scenes:
            record = {
                "id": s.id,
                "width": s.width,
                "height": s.height,
                "boxes": [_box_record(b) for b in s.boxes],
            }
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


def read_scenes(path) -> List[Scene]:
    scenes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                boxes = [
                    BoxGeometry(b["x"], b["y"], b["w"], b["h"]).validate()
                    for b in record["boxes"]
                ]
                scene = Scene(
                    id=str(record["id"]),
                    width=float(record["width"]),
                    height=float(record["height"]),
                    boxes=boxes,
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: malformed scene on line {lineno}: {exc}") from exc
            scenes.append(scene)
    return scenes


@dataclass
class Detection:
    """One stitched, image-absolute detection."""

    geometry: BoxGeometry
    confidence: float
    rank: int
    region_index: int


@dataclass
class ScenePredictions:
    scene_id: str
    detections: List[Detection] = field(default_factory=list)


def write_predictions(predictions: Sequence[ScenePredictions], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            record = {
                "scene_id": p.scene_id,
                "boxes": [
                    {
                        **_box_record(d.geometry),
                        "confidence": d.confidence,
                        "rank": d.rank,
                        "region_index": d.region_index,
                    }
                    for d in p.detections
                ],
            }
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


def read_predictions(path) -> List[ScenePredictions]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                detections = [
                    Detection(
                        geometry=BoxGeometry(b["x"], b["y"], b["w"], b["h"]),
                        confidence=float(b["confidence"]),
                        rank=int(b["rank"]),
                        region_index=int(b["region_index"]),
                    )
                    for b in record["boxes"]
                ]
                out.append(ScenePredictions(str(record["scene_id"]), detections))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(
                    f"{path}: malformed predictions on line {lineno}: {exc}"
                ) from exc
    return out

