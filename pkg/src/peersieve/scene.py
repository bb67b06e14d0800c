"""Scene simulator and late-fusion surrogate.

Agents observe a shared 2D world in bird's-eye view. Benign observations are
ground truth degraded by a miss rate, center jitter, and Poisson clutter;
malicious observations are benign observations passed through ``corrupt``.
Fusion is a union-and-merge over box sets, or an element-wise mean over
probability grids. Every stochastic step takes an explicit seed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .consistency import iou
from .rng import make_rng
from .types import (
    BoxProposal,
    ConfigError,
    DetectionSet,
    PerceptionOutput,
    SegGrid,
)


class AttackKind(str, Enum):
    SPOOF = "spoof"
    REMOVE = "remove"
    SHIFT = "shift"
    SEG_FLIP = "seg_flip"


_DETECTION_KINDS = {AttackKind.SPOOF, AttackKind.REMOVE, AttackKind.SHIFT}


@dataclass(frozen=True)
class AttackSpec:
    """Output-space corruption applied to a benign observation.

    ``count`` is read by SPOOF, ``fraction`` by REMOVE and SEG_FLIP,
    ``offset_m`` by SHIFT. ``region`` optionally bounds spoofed centers
    (x_min, y_min, x_max, y_max); when absent the existing boxes' hull is used.
    """

    kind: AttackKind
    count: int = 1
    fraction: float = 0.0
    offset_m: float = 0.0
    region: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind == AttackKind.SPOOF and self.count < 1:
            raise ConfigError(f"spoof count must be >= 1, got {self.count}")
        if self.kind in (AttackKind.REMOVE, AttackKind.SEG_FLIP):
            if not 0.0 <= self.fraction <= 1.0:
                raise ConfigError(f"fraction must be in [0,1], got {self.fraction}")
        if self.kind == AttackKind.SHIFT and self.offset_m < 0:
            raise ConfigError(f"shift offset must be >= 0, got {self.offset_m}")
        if self.region is not None:
            x0, y0, x1, y1 = self.region
            if not (x0 < x1 and y0 < y1):
                raise ConfigError(f"degenerate spoof region {self.region}")


class Role(str, Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"


@dataclass(frozen=True)
class AgentModel:
    """Sensing profile of one agent; ``attack`` present iff the agent is malicious."""

    agent_id: int
    pose: tuple[float, float]
    fov_radius: float
    p_detect: float = 1.0
    pos_noise_sigma: float = 0.0
    false_positive_rate: float = 0.0
    attack: AttackSpec | None = None

    def __post_init__(self) -> None:
        if self.fov_radius <= 0:
            raise ConfigError(f"fov_radius must be > 0, got {self.fov_radius}")
        if not 0.0 <= self.p_detect <= 1.0:
            raise ConfigError(f"p_detect must be in [0,1], got {self.p_detect}")
        if self.pos_noise_sigma < 0:
            raise ConfigError("pos_noise_sigma must be >= 0")
        if self.false_positive_rate < 0:
            raise ConfigError("false_positive_rate must be >= 0")
        if self.agent_id == 0 and self.attack is not None:
            raise ConfigError("the ego agent cannot be malicious")

    @property
    def role(self) -> Role:
        return Role.MALICIOUS if self.attack is not None else Role.BENIGN


@dataclass(frozen=True)
class GroundTruthObject:
    x: float
    y: float
    half_w: float
    half_h: float
    class_id: int

    def __post_init__(self) -> None:
        if self.half_w <= 0 or self.half_h <= 0:
            raise ConfigError("half-extents must be strictly positive")
        if self.class_id < 0:
            raise ConfigError("class_id must be >= 0")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (self.x - self.half_w, self.y - self.half_h,
                self.x + self.half_w, self.y + self.half_h)


@dataclass(frozen=True, eq=False)
class Scene:
    """Ground truth for one frame: objects plus an optional label grid."""

    width_m: float
    height_m: float
    n_classes: int
    objects: tuple[GroundTruthObject, ...]
    extent_range_m: tuple[float, float]
    seg_truth: np.ndarray | None = None
    seg_noise: float = 0.0

    def __post_init__(self) -> None:
        for obj in self.objects:
            if not (0.0 <= obj.x <= self.width_m and 0.0 <= obj.y <= self.height_m):
                raise ConfigError(f"object center ({obj.x}, {obj.y}) outside world")
            if obj.class_id >= self.n_classes:
                raise ConfigError("object class_id beyond class count")
        if self.seg_truth is not None and self.seg_truth.ndim != 2:
            raise ConfigError("seg_truth must be a 2-D label grid")


@dataclass(frozen=True)
class SimConfig:
    width_m: float
    height_m: float
    n_objects: int
    n_classes: int
    min_extent_m: float
    max_extent_m: float
    agents: tuple[AgentModel, ...] = ()
    merge_iou: float = 0.5
    seg_shape: tuple[int, int] | None = None
    seg_noise: float = 0.02

    def __post_init__(self) -> None:
        if self.width_m <= 0 or self.height_m <= 0:
            raise ConfigError("world extent must be positive")
        if self.n_objects < 0:
            raise ConfigError("object count must be >= 0")
        if self.n_classes < 1:
            raise ConfigError("need at least one class")
        if not 0 < self.min_extent_m <= self.max_extent_m:
            raise ConfigError("invalid object extent range")
        if not 0.0 < self.merge_iou <= 1.0:
            raise ConfigError("merge_iou must be in (0,1]")
        if self.seg_shape is not None:
            w, h = self.seg_shape
            if w < 1 or h < 1:
                raise ConfigError("segmentation grid must be at least 1x1")
        ids = [a.agent_id for a in self.agents]
        if ids and (ids != list(range(len(ids)))):
            raise ConfigError("agent ids must be 0..k-1 in order")

    @property
    def segmentation(self) -> bool:
        return self.seg_shape is not None


def _object_class(rng: np.random.Generator, n_classes: int) -> int:
    # class 0 is background on grids, so objects avoid it when possible
    if n_classes >= 2:
        return int(rng.integers(1, n_classes))
    return 0


def _rasterize(objects: Sequence[GroundTruthObject], config: SimConfig) -> np.ndarray:
    w_px, h_px = config.seg_shape  # type: ignore[misc]
    px_w = config.width_m / w_px
    px_h = config.height_m / h_px
    labels = np.zeros((w_px, h_px), dtype=np.int64)
    for obj in objects:
        # paint pixels whose centers fall inside the object rectangle
        i0 = max(0, math.ceil((obj.x - obj.half_w) / px_w - 0.5))
        i1 = min(w_px - 1, math.floor((obj.x + obj.half_w) / px_w - 0.5))
        j0 = max(0, math.ceil((obj.y - obj.half_h) / px_h - 0.5))
        j1 = min(h_px - 1, math.floor((obj.y + obj.half_h) / px_h - 0.5))
        if i0 <= i1 and j0 <= j1:
            labels[i0:i1 + 1, j0:j1 + 1] = obj.class_id
    return labels


def gen_scene(config: SimConfig, seed: int) -> Scene:
    """Draw object centers, extents and classes; deterministic in (config, seed)."""
    rng = make_rng(seed)
    objects = []
    for _ in range(config.n_objects):
        x = float(rng.uniform(0.0, config.width_m))
        y = float(rng.uniform(0.0, config.height_m))
        half_w = float(rng.uniform(config.min_extent_m, config.max_extent_m)) / 2.0
        half_h = float(rng.uniform(config.min_extent_m, config.max_extent_m)) / 2.0
        objects.append(GroundTruthObject(x, y, half_w, half_h,
                                         _object_class(rng, config.n_classes)))
    seg_truth = _rasterize(objects, config) if config.segmentation else None
    return Scene(
        width_m=config.width_m,
        height_m=config.height_m,
        n_classes=config.n_classes,
        objects=tuple(objects),
        extent_range_m=(config.min_extent_m, config.max_extent_m),
        seg_truth=seg_truth,
        seg_noise=config.seg_noise,
    )


def _one_hot(class_id: int, n_classes: int) -> tuple[float, ...]:
    return tuple(1.0 if c == class_id else 0.0 for c in range(n_classes))


def _observe_detections(scene: Scene, agent: AgentModel, rng: np.random.Generator) -> DetectionSet:
    ax, ay = agent.pose
    boxes = []
    for obj in scene.objects:
        if math.hypot(obj.x - ax, obj.y - ay) > agent.fov_radius:
            continue
        if rng.uniform() >= agent.p_detect:
            continue
        dx, dy = rng.normal(0.0, agent.pos_noise_sigma, size=2)
        boxes.append(BoxProposal(
            obj.x + dx - obj.half_w, obj.y + dy - obj.half_h,
            obj.x + dx + obj.half_w, obj.y + dy + obj.half_h,
            _one_hot(obj.class_id, scene.n_classes),
        ))
    lo, hi = scene.extent_range_m
    for _ in range(int(rng.poisson(agent.false_positive_rate))):
        x = float(rng.uniform(0.0, scene.width_m))
        y = float(rng.uniform(0.0, scene.height_m))
        half_w = float(rng.uniform(lo, hi)) / 2.0
        half_h = float(rng.uniform(lo, hi)) / 2.0
        boxes.append(BoxProposal(
            x - half_w, y - half_h, x + half_w, y + half_h,
            _one_hot(_object_class(rng, scene.n_classes), scene.n_classes),
        ))
    return DetectionSet(tuple(boxes))


def _observe_seg(scene: Scene, agent: AgentModel, rng: np.random.Generator) -> SegGrid:
    if scene.seg_truth is None:
        raise ConfigError("scene has no segmentation truth grid")
    w_px, h_px = scene.seg_truth.shape
    n_classes = scene.n_classes
    probs = np.zeros((w_px, h_px, n_classes))
    np.put_along_axis(probs, scene.seg_truth[..., None], 1.0, axis=2)
    if agent.pos_noise_sigma > 0:
        sigma_px = (agent.pos_noise_sigma / (scene.width_m / w_px),
                    agent.pos_noise_sigma / (scene.height_m / h_px), 0.0)
        probs = gaussian_filter(probs, sigma=sigma_px, mode="nearest")
    probs = agent.p_detect * probs + (1.0 - agent.p_detect) / n_classes
    if scene.seg_noise > 0:
        probs = probs + rng.normal(0.0, scene.seg_noise, size=probs.shape)
    return SegGrid(np.clip(probs, 0.0, 1.0))


def observe(scene: Scene, agent: AgentModel, seed: int) -> PerceptionOutput:
    """The agent's pre-attack observation; corruption is applied separately."""
    rng = make_rng(seed)
    if scene.seg_truth is not None:
        return _observe_seg(scene, agent, rng)
    return _observe_detections(scene, agent, rng)


def _spoof_region(boxes: Sequence[BoxProposal],
                  spec: AttackSpec) -> tuple[float, float, float, float]:
    if spec.region is not None:
        return spec.region
    if boxes:
        return (min(b.x_min for b in boxes), min(b.y_min for b in boxes),
                max(b.x_max for b in boxes), max(b.y_max for b in boxes))
    return (0.0, 0.0, 1.0, 1.0)


def _corrupt_detections(output: DetectionSet, spec: AttackSpec, seed: int) -> DetectionSet:
    rng = make_rng(seed)
    boxes = list(output.boxes)
    if spec.kind == AttackKind.SHIFT:
        if spec.offset_m == 0:
            return output
        theta = rng.uniform(0.0, 2.0 * math.pi)
        dx = math.cos(theta) * spec.offset_m
        dy = math.sin(theta) * spec.offset_m
        return DetectionSet(tuple(
            BoxProposal(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy,
                        b.posteriors)
            for b in boxes
        ))
    if spec.kind == AttackKind.REMOVE:
        n_drop = math.floor(spec.fraction * len(boxes) + 0.5)
        if n_drop == 0:
            return output
        # a fixed permutation prefix makes larger fractions drop supersets
        order = rng.permutation(len(boxes))
        dropped = set(int(i) for i in order[:n_drop])
        return DetectionSet(tuple(b for i, b in enumerate(boxes) if i not in dropped))
    if spec.kind == AttackKind.SPOOF:
        x0, y0, x1, y1 = _spoof_region(boxes, spec)
        n_classes = output.class_count() or 1
        fakes = []
        for _ in range(spec.count):
            x = float(rng.uniform(x0, x1))
            y = float(rng.uniform(y0, y1))
            half_w = float(rng.uniform(0.5, 2.5))
            half_h = float(rng.uniform(0.5, 2.5))
            fakes.append(BoxProposal(
                x - half_w, y - half_h, x + half_w, y + half_h,
                _one_hot(_object_class(rng, n_classes), n_classes),
            ))
        return DetectionSet(tuple(boxes) + tuple(fakes))
    raise ConfigError(f"attack {spec.kind.value} does not apply to detections")


def _corrupt_seg(output: SegGrid, spec: AttackSpec, seed: int) -> SegGrid:
    if spec.kind != AttackKind.SEG_FLIP:
        raise ConfigError(f"attack {spec.kind.value} does not apply to grids")
    rng = make_rng(seed)
    w, h, c = output.shape
    n_flip = math.floor(spec.fraction * w * h + 0.5)
    if n_flip == 0:
        return output
    flat = rng.choice(w * h, size=n_flip, replace=False)
    probs = output.probs.copy()
    ii, jj = np.unravel_index(np.sort(flat), (w, h))
    if c == 1:
        probs[ii, jj, 0] = 1.0 - probs[ii, jj, 0]
    else:
        probs[ii, jj, :] = np.roll(probs[ii, jj, :], 1, axis=-1)
    return SegGrid(probs)


def corrupt(output: PerceptionOutput, spec: AttackSpec, seed: int) -> PerceptionOutput:
    """Apply one attack to a benign observation; deterministic in the seed."""
    if isinstance(output, DetectionSet):
        if spec.kind not in _DETECTION_KINDS:
            raise ConfigError(f"attack {spec.kind.value} does not apply to detections")
        return _corrupt_detections(output, spec, seed)
    return _corrupt_seg(output, spec, seed)


def _canonical_key(box: BoxProposal):
    return (box.x_min, box.y_min, box.x_max, box.y_max, box.posteriors)


def _merge_cluster(members: list[BoxProposal]) -> BoxProposal:
    if len(members) == 1:
        return members[0]
    first = members[0]
    if all(b == first for b in members[1:]):
        return first
    weights = [max(b.posteriors) for b in members]
    total = sum(weights)
    if total == 0.0:
        weights = [1.0] * len(members)
        total = float(len(members))
    corners = [0.0, 0.0, 0.0, 0.0]
    for w, b in zip(weights, members):
        for k, v in enumerate(b.corners):
            corners[k] += w * v
    corners = [v / total for v in corners]
    posteriors = tuple(max(b.posteriors[c] for b in members)
                       for c in range(len(first.posteriors)))
    return BoxProposal(corners[0], corners[1], corners[2], corners[3], posteriors)


def fuse_detections(ego: DetectionSet, others: Sequence[DetectionSet],
                    merge_iou: float = 0.5) -> DetectionSet:
    """Union of all boxes with greedy IoU clustering.

    Ego boxes seed clusters first in their original order; collaborator boxes
    join in a canonical sorted order, so the result is invariant to any
    permutation of ``others`` bit for bit.
    """
    counts = {s.class_count() for s in (ego, *others)} - {None}
    if len(counts) > 1:
        raise ConfigError(f"mixed class counts in fusion: {sorted(counts)}")
    incoming = [b for s in others for b in s.boxes]
    if not incoming:
        return ego
    candidates = list(ego.boxes) + sorted(incoming, key=_canonical_key)
    clusters: list[list[BoxProposal]] = []
    for cand in candidates:
        for cluster in clusters:
            if iou(cluster[0], cand) >= merge_iou:
                cluster.append(cand)
                break
        else:
            clusters.append([cand])
    return DetectionSet(tuple(_merge_cluster(c) for c in clusters))


def _grid_digest(grid: SegGrid) -> str:
    return hashlib.sha256(np.ascontiguousarray(grid.probs).tobytes()).hexdigest()


def fuse_segmaps(ego: SegGrid, others: Sequence[SegGrid]) -> SegGrid:
    """Element-wise mean of ego and collaborator grids (order-invariant)."""
    for o in others:
        if o.shape != ego.shape:
            raise ConfigError(f"grid shape mismatch: {o.shape} vs {ego.shape}")
    if not others:
        return ego.copy()
    if all(np.array_equal(o.probs, ego.probs) for o in others):
        return ego.copy()
    ordered = sorted(others, key=_grid_digest)
    acc = ego.probs.copy()
    for o in ordered:
        acc += o.probs
    acc /= float(len(others) + 1)
    return SegGrid(np.clip(acc, 0.0, 1.0))


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"missing key '{key}' in {where}")
    return doc[key]


def parse_attack(doc: dict) -> AttackSpec:
    kind_raw = _require(doc, "kind", "attack")
    try:
        kind = AttackKind(kind_raw)
    except ValueError:
        raise ConfigError(f"unknown attack kind {kind_raw!r}") from None
    return AttackSpec(
        kind=kind,
        count=int(doc.get("count", 1)),
        fraction=float(doc.get("fraction", 0.0)),
        offset_m=float(doc.get("offset_m", 0.0)),
        region=tuple(doc["region"]) if doc.get("region") is not None else None,
    )


def parse_agent(doc: dict, agent_id: int) -> AgentModel:
    role_raw = doc.get("role", Role.BENIGN.value)
    try:
        role = Role(role_raw)
    except ValueError:
        raise ConfigError(f"unknown role {role_raw!r}") from None
    attack_doc = doc.get("attack")
    if role == Role.MALICIOUS and attack_doc is None:
        raise ConfigError(f"agent {agent_id} is malicious but has no attack")
    if role == Role.BENIGN and attack_doc is not None:
        raise ConfigError(f"agent {agent_id} is benign but carries an attack")
    pose = _require(doc, "pose", f"agent {agent_id}")
    if not (isinstance(pose, (list, tuple)) and len(pose) == 2):
        raise ConfigError(f"agent {agent_id} pose must be [x, y]")
    return AgentModel(
        agent_id=agent_id,
        pose=(float(pose[0]), float(pose[1])),
        fov_radius=float(_require(doc, "fov_radius", f"agent {agent_id}")),
        p_detect=float(doc.get("p_detect", 1.0)),
        pos_noise_sigma=float(doc.get("pos_noise_sigma", 0.0)),
        false_positive_rate=float(doc.get("false_positive_rate", 0.0)),
        attack=parse_attack(attack_doc) if attack_doc is not None else None,
    )


def parse_sim_config(doc: dict) -> SimConfig:
    world = _require(doc, "world", "config")
    objects = _require(doc, "objects", "config")
    agents_doc = doc.get("agents", [])
    seg = doc.get("seg")
    fusion = doc.get("fusion", {})
    try:
        return SimConfig(
            width_m=float(_require(world, "width_m", "world")),
            height_m=float(_require(world, "height_m", "world")),
            n_objects=int(_require(objects, "count", "objects")),
            n_classes=int(_require(objects, "class_count", "objects")),
            min_extent_m=float(_require(objects, "min_extent_m", "objects")),
            max_extent_m=float(_require(objects, "max_extent_m", "objects")),
            agents=tuple(parse_agent(a, i) for i, a in enumerate(agents_doc)),
            merge_iou=float(fusion.get("merge_iou", 0.5)),
            seg_shape=(int(_require(seg, "width_px", "seg")),
                       int(_require(seg, "height_px", "seg"))) if seg else None,
            seg_noise=float(seg.get("pixel_noise", 0.02)) if seg else 0.02,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed simulation config: {exc}") from exc


def load_sim_config(path: str) -> SimConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_sim_config(doc)
