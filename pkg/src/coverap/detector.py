"""Point-set box detector, fusion input assembly, late-fusion MLP and training loop."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .boxes import BBox7
from .dataset import TOP_K, SceneBundle, top_k_points
from .eval_geom import rotated_iou_3d
from .nn import checkpoint
from .nn import tensor as T
from .nn.layers import DenseStack, Linear, MLP, Module, SelfAttention, masked_mean
from .nn.losses import LossWeights, composite_loss
from .nn.optim import AdamWState, PlateauState, TrainConfig, adamw_step, scheduler_step
from .nn.tensor import NonFiniteError, Tensor, no_grad
from .radar_dsp import PointFrame
from .sync_align import RigidOffset, transform_frame

VARIANTS = ("rear", "side", "fused_rear", "fused_side", "late")
CONF_MIN_POINTS = 5
FEATURE_NAMES = ("x", "y", "z", "velocity", "range", "bearing_rad", "log10_intensity")
_STD_FLOOR = 0.1
_MIN_SIZE = 1e-3  # keeps sizes positive when softplus underflows


class TrainingDivergence(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# inputs and outputs


@dataclass
class FrameInput:
    """Per-point features for one frame; masked rows are zero."""

    position: np.ndarray
    dynamics: np.ndarray
    intensity: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        n = len(self.mask)
        for name in ("position", "dynamics", "intensity"):
            arr = np.asarray(getattr(self, name), dtype=float)
            want = 1 if name == "intensity" else 3
            if arr.shape != (n, want):
                raise ValueError(f"{name} must be ({n}, {want}), got {arr.shape}")
            if np.any(arr[~self.mask] != 0):
                raise ValueError(f"masked rows of {name} must be zero")
            setattr(self, name, arr)
        if not self.mask.any():
            raise ValueError("frame has no valid rows")

    @property
    def n(self) -> int:
        return len(self.mask)

    @classmethod
    def from_points(cls, points: np.ndarray, mask: np.ndarray) -> "FrameInput":
        """Build from ``(N, 7)`` rows ``x,y,z,range,velocity,bearing_deg,intensity``."""
        pts = np.where(np.asarray(mask, bool)[:, None], np.asarray(points, dtype=float), 0.0)
        return cls(pts[:, 0:3], pts[:, [4, 3, 5]], pts[:, 6:7], mask)

    def points(self) -> np.ndarray:
        out = np.zeros((self.n, 7))
        out[:, 0:3] = self.position
        out[:, [4, 3, 5]] = self.dynamics
        out[:, 6:7] = self.intensity
        return out


@dataclass(frozen=True)
class Detection:
    bbox: BBox7
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    def to_array(self) -> np.ndarray:
        return np.append(self.bbox.to_array(), self.confidence)

    def transformed(self, offset: RigidOffset) -> "Detection":
        return Detection(self.bbox.transformed(offset.translation, offset.yaw), self.confidence)


def middle_fuse_inputs(ego: PointFrame, assistant: PointFrame, offset: RigidOffset,
                       k: int = TOP_K) -> FrameInput:
    """Move the assistant into the ego frame and stack ego rows first, ``2k`` rows in all."""
    if len(ego) == 0 and len(assistant) == 0:
        raise ValueError("both frames are empty")
    moved = transform_frame(assistant, offset)
    e_pts, e_mask = top_k_points(ego.points, k)
    a_pts, a_mask = top_k_points(moved.points, k)
    return FrameInput.from_points(np.vstack([e_pts, a_pts]), np.concatenate([e_mask, a_mask]))


def points_inside(points: np.ndarray, mask: np.ndarray, box: BBox7) -> int:
    pts = np.asarray(points)[np.asarray(mask, bool)]
    return int(box.contains(pts[:, :3]).sum()) if len(pts) else 0


# ---------------------------------------------------------------------------
# standardization


def _inv_softplus(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


@dataclass
class Normalizer:
    """Fixed affine maps fitted on training frames and stored with the weights."""

    feat_mean: list = field(default_factory=lambda: [0.0] * 7)
    feat_std: list = field(default_factory=lambda: [1.0] * 7)
    box_mean: list = field(default_factory=lambda: [1.8, 1.5, 4.5, 0.0, 10.0, 0.0, math.pi / 2])
    box_std: list = field(default_factory=lambda: [1.0] * 7)

    @staticmethod
    def raw_features(points: np.ndarray) -> np.ndarray:
        """``(..., 7)`` point rows to the model's unscaled per-point features."""
        p = np.asarray(points, dtype=float)
        f = np.empty(p.shape)
        f[..., 0:3] = p[..., 0:3]
        f[..., 3] = p[..., 4]
        f[..., 4] = p[..., 3]
        f[..., 5] = np.radians(p[..., 5])
        f[..., 6] = np.log10(np.maximum(p[..., 6], 1e-12))
        return f

    @classmethod
    def fit(cls, points: np.ndarray, masks: np.ndarray, boxes: np.ndarray) -> "Normalizer":
        rows = cls.raw_features(points)[np.asarray(masks, bool)]
        out = cls.for_boxes(boxes)
        out.feat_mean = rows.mean(axis=0).tolist()
        out.feat_std = np.maximum(rows.std(axis=0), 1e-3).tolist()
        return out

    @classmethod
    def for_boxes(cls, boxes: np.ndarray) -> "Normalizer":
        """Box statistics only; yaw uses the circular mean and unit scale."""
        boxes = np.asarray(boxes, dtype=float)
        bmean = boxes.mean(axis=0)
        bmean[6] = math.atan2(np.sin(boxes[:, 6]).mean(), np.cos(boxes[:, 6]).mean())
        bstd = np.maximum(boxes.std(axis=0), _STD_FLOOR)
        bstd[6] = 1.0
        return cls(box_mean=bmean.tolist(), box_std=bstd.tolist())

    def features(self, points: np.ndarray, masks: np.ndarray) -> np.ndarray:
        f = (self.raw_features(points) - np.asarray(self.feat_mean)) / np.asarray(self.feat_std)
        return np.where(np.asarray(masks, bool)[..., None], f, 0.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "Normalizer":
        return cls(**{k: list(v) for k, v in d.items()})


def decode_boxes(raw: Tensor, norm: Normalizer) -> Tensor:
    """Head outputs to ``(w,h,l,x,y,z,theta)``: softplus sizes, affine centre, wrapped yaw."""
    m = np.asarray(norm.box_mean, dtype=raw.dtype)
    s = np.asarray(norm.box_std, dtype=raw.dtype)
    dims = T.add(T.softplus(T.add(T.mul(raw[:, 0:3], s[0:3]),
                                  _inv_softplus(m[0:3] - _MIN_SIZE).astype(raw.dtype))), _MIN_SIZE)
    centre = T.add(T.mul(raw[:, 3:6], s[3:6]), m[3:6])
    theta = T.wrap_angle(T.add(raw[:, 6:7], m[6:7]))
    return T.concat([dims, centre, theta], axis=-1)


# ---------------------------------------------------------------------------
# models


class DetectorNet(Module):
    """Three encoder branches, attention context, intensity pooling and two heads."""

    def __init__(self, seed: int = 0, dropout: float = 0.1, use_intensity: bool = True,
                 dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.use_intensity = use_intensity
        self.pos = self.child("pos", DenseStack([3, 64, 128, 256], rng, dropout, dtype))
        self.dyn = self.child("dyn", DenseStack([3, 64, 128, 256], rng, dropout, dtype))
        self.inten = self.child("inten", DenseStack([1, 256], rng, dropout, dtype))
        self.scorer = self.child("scorer", Linear(256, 1, rng, dtype))
        self.fuse = self.child("fuse", Linear(512, 256, rng, dtype))
        self.attn = self.child("attn", SelfAttention(256, rng, dtype))
        self.bbox_head = self.child("bbox_head", MLP([512, 1024, 512, 7], rng, dtype))
        self.conf_head = self.child("conf_head", MLP([512, 128, 1], rng, dtype))
        self.norm = Normalizer()
        self.dtype = dtype

    def set_dropout_rng(self, rng: Optional[np.random.Generator]) -> None:
        for stack in (self.pos, self.dyn, self.inten):
            stack.set_rng(rng)

    def encode_branches(self, feats, mask: np.ndarray) -> tuple:
        """Standardized ``[B,N,7]`` features -> pos, dyn, inten ``[B,N,256]`` and att_w ``[B,N]``."""
        x = T.as_tensor(feats)
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise ValueError("frame has no valid rows")
        pos = self.pos(x[..., 0:3])
        dyn = self.dyn(x[..., 3:6])
        inten = self.inten(x[..., 6:7])
        scores = T.reshape(self.scorer(inten), mask.shape)
        att_w = T.masked_softmax(scores, mask, axis=-1)
        return pos, dyn, inten, att_w

    def forward_raw(self, feats, mask: np.ndarray) -> tuple:
        pos, dyn, inten, att_w = self.encode_branches(feats, mask)
        h = self.fuse(T.concat([pos, dyn], axis=-1))
        h = self.attn(h, mask)
        context = masked_mean(h, mask)
        if self.use_intensity:
            pooled = T.tsum(T.mul(inten, T.reshape(att_w, att_w.shape + (1,))), axis=-2)
        else:
            pooled = Tensor(np.zeros(context.shape, dtype=context.dtype))
        z = T.concat([context, pooled], axis=-1)
        raw = self.bbox_head(z)
        logit = T.reshape(self.conf_head(z), (z.shape[0],))
        return raw, logit, att_w

    def forward_batch(self, feats, mask: np.ndarray) -> tuple:
        raw, logit, _ = self.forward_raw(feats, mask)
        return decode_boxes(raw, self.norm), logit

    def detect(self, f: FrameInput) -> Detection:
        return forward(f, self)


def forward(f: FrameInput, model: DetectorNet, mode: str = "eval") -> Detection:
    """Run the detector on one frame. ``mode`` is ``train`` or ``eval``."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    was = model.training
    model.train(mode == "train")
    try:
        feats = model.norm.features(f.points()[None], f.mask[None]).astype(model.dtype)
        with no_grad():
            box, logit = model.forward_batch(feats, f.mask[None])
    finally:
        model.train(was)
    return _to_detection(box.data[0], logit.data[0])


def _to_detection(box: np.ndarray, logit: float) -> Detection:
    conf = float(0.5 * (1.0 + np.tanh(0.5 * float(logit))))
    return Detection(BBox7.from_array(np.asarray(box, dtype=float)), min(max(conf, 0.0), 1.0))


class LateFusionNet(Module):
    """Decision MLP 16 -> 128 -> 64 -> 8 over two (box, confidence) pairs."""

    WIDTHS = (16, 128, 64, 8)

    def __init__(self, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.mlp = self.child("mlp", MLP(list(self.WIDTHS), np.random.default_rng(seed), dtype))
        self.in_mean = np.zeros(16)
        self.in_std = np.ones(16)
        self.norm = Normalizer()
        self.dtype = dtype

    def fit_inputs(self, x: np.ndarray) -> None:
        self.in_mean = x.mean(axis=0)
        self.in_std = np.maximum(x.std(axis=0), 1e-3)

    def forward_batch(self, x: np.ndarray) -> tuple:
        xs = ((np.asarray(x) - self.in_mean) / self.in_std).astype(self.dtype)
        out = self.mlp(Tensor(xs))
        return decode_boxes(out[:, 0:7], self.norm), out[:, 7]


def late_input(ego_det: Detection, assistant_det: Detection) -> np.ndarray:
    return np.concatenate([ego_det.to_array(), assistant_det.to_array()])


def late_fuse(ego_det: Detection, assistant_det: Detection, offset: RigidOffset,
              fusion: LateFusionNet) -> Detection:
    """Combine two detections; ``assistant_det`` is in the assistant frame and is moved by ``offset``."""
    moved = assistant_det.transformed(offset)
    x = late_input(ego_det, moved)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite detection")
    with no_grad():
        box, logit = fusion.forward_batch(x[None])
    return _to_detection(box.data[0], logit.data[0])


# ---------------------------------------------------------------------------
# dataset assembly


@dataclass
class VariantData:
    points: np.ndarray      # (F, N, 7)
    masks: np.ndarray       # (F, N)
    boxes: np.ndarray       # (F, 7) ground truth in the ego frame
    labels: np.ndarray      # (F,) confidence targets
    frames: list            # (scene_id, index) pairs

    def __len__(self) -> int:
        return len(self.boxes)

    def subset(self, idx) -> "VariantData":
        idx = np.asarray(idx, dtype=int)
        return VariantData(self.points[idx], self.masks[idx], self.boxes[idx], self.labels[idx],
                           [self.frames[i] for i in idx])


def ego_view(variant: str) -> str:
    if variant in ("rear", "fused_rear", "late"):
        return "rear"
    if variant in ("side", "fused_side", "late_side"):
        return "side"
    raise ValueError(f"unknown variant {variant!r}")


def _frame_rows(bundle: SceneBundle, variant: str, i: int) -> tuple:
    ego = ego_view(variant)
    if variant in ("rear", "side"):
        return bundle.points[ego][i], bundle.masks[ego][i]
    other = "side" if ego == "rear" else "rear"
    fi = middle_fuse_inputs(bundle.frame(ego, i), bundle.frame(other, i),
                            bundle.offset_into(ego, i), bundle.k)
    return fi.points(), fi.mask


def variant_data(bundles: Sequence[SceneBundle], variant: str, split: Optional[str] = None) -> VariantData:
    """Stack every frame of ``split`` (all frames when None) from each bundle."""
    if variant not in ("rear", "side", "fused_rear", "fused_side"):
        raise ValueError(f"no point inputs for variant {variant!r}")
    ego = ego_view(variant)
    pts, masks, boxes, labels, frames = [], [], [], [], []
    for b in bundles:
        idx = range(len(b)) if split is None else b.splits.subset(split)
        for i in idx:
            p, m = _frame_rows(b, variant, i)
            gt = b.gt_in(ego, i)
            pts.append(p)
            masks.append(m)
            boxes.append(gt.to_array())
            labels.append(float(points_inside(p, m, gt) >= CONF_MIN_POINTS))
            frames.append((b.scene_id, int(i)))
    if not pts:
        raise ValueError(f"no frames in split {split!r}")
    return VariantData(np.stack(pts), np.stack(masks), np.array(boxes), np.array(labels), frames)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: Module
    history: list
    best_epoch: int
    best_val: float
    variant: str
    config: TrainConfig
    members: dict = field(default_factory=dict)

    def metrics_json(self) -> str:
        return json.dumps(self.history, indent=1)


def compact_rows(feats: np.ndarray, masks: np.ndarray) -> tuple:
    """Move each frame's valid rows to the front and drop columns no frame uses.

    Masked rows never influence the output, so this only saves work.
    """
    masks = np.asarray(masks, dtype=bool)
    order = np.argsort(~masks, axis=1, kind="stable")
    n = max(int(masks.sum(axis=1).max()), 1)
    order = order[:, :n]
    return (np.take_along_axis(feats, order[..., None], axis=1),
            np.take_along_axis(masks, order, axis=1))


def _detector_loss(model: DetectorNet, feats, masks, boxes, labels, weights):
    box, logit = model.forward_batch(*compact_rows(feats, masks))
    return composite_loss(box, logit, boxes, labels, weights)


def _run_epochs(model: Module, loss_fn: Callable, n_train: int, val_fn: Callable,
                cfg: TrainConfig, shuffle_rng: np.random.Generator, log: Optional[Callable]) -> tuple:
    params = model.parameters()
    opt = AdamWState()
    sched = PlateauState(cfg.learning_rate, cfg.plateau_factor, cfg.plateau_patience,
                         cfg.plateau_min_delta)
    history, best_val, best_epoch, best_state = [], float("inf"), -1, None
    for epoch in range(1, cfg.epochs + 1):
        model.train(True)
        order = shuffle_rng.permutation(n_train)
        total, count = 0.0, 0
        for b, start in enumerate(range(0, n_train, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                loss, _ = loss_fn(idx)
                model.zero_grad()
                loss.backward()
                adamw_step(params, [p.grad for p in params], opt, sched.lr, cfg.weight_decay)
            except NonFiniteError as exc:
                raise TrainingDivergence(f"epoch {epoch} batch {b}: {exc}") from exc
            total += float(loss.data) * len(idx)
            count += len(idx)
        model.zero_grad()
        model.train(False)
        with no_grad():
            val = val_fn()
        lr = sched.lr
        row = {"epoch": epoch, "train_loss": total / count, "val_loss": val, "lr": lr}
        history.append(row)
        if log is not None:
            log(row)
        if val < best_val:
            best_val, best_epoch, best_state = val, epoch, model.state_dict()
        scheduler_step(sched, val)
    model.load_state_dict(best_state)
    model.train(False)
    return history, best_epoch, best_val


def _batched_eval(fn: Callable, n: int, batch: int = 64) -> float:
    total = 0.0
    for start in range(0, n, batch):
        idx = np.arange(start, min(n, start + batch))
        loss, _ = fn(idx)
        total += float(loss.data) * len(idx)
    return total / n


def train_detector(train: VariantData, val: Optional[VariantData], cfg: TrainConfig,
                   weights: LossWeights = LossWeights(), use_intensity: bool = True,
                   log: Optional[Callable] = None, variant: str = "rear") -> TrainResult:
    """Fit one detector; the checkpoint with the lowest validation loss is kept.

    Without validation frames the training loss drives selection and the schedule.
    """
    model = DetectorNet(seed=cfg.seed, dropout=cfg.dropout_rate, use_intensity=use_intensity)
    model.norm = Normalizer.fit(train.points, train.masks, train.boxes)
    ss = np.random.SeedSequence(cfg.seed).spawn(2)
    model.set_dropout_rng(np.random.default_rng(ss[0]))
    feats_tr = model.norm.features(train.points, train.masks).astype(np.float32)
    evalset = val if val is not None and len(val) else train
    feats_ev = model.norm.features(evalset.points, evalset.masks).astype(np.float32)

    def loss_fn(idx):
        return _detector_loss(model, feats_tr[idx], train.masks[idx], train.boxes[idx],
                              train.labels[idx], weights)

    def val_fn():
        return _batched_eval(lambda idx: _detector_loss(model, feats_ev[idx], evalset.masks[idx],
                                                        evalset.boxes[idx], evalset.labels[idx],
                                                        weights), len(evalset))

    history, best_epoch, best_val = _run_epochs(model, loss_fn, len(train), val_fn, cfg,
                                                np.random.default_rng(ss[1]), log)
    return TrainResult(model, history, best_epoch, best_val, variant, cfg)


def predict(model: DetectorNet, data: VariantData, batch: int = 128) -> tuple:
    """Eval-mode boxes ``(F, 7)`` and confidences ``(F,)``."""
    model.train(False)
    boxes, confs = [], []
    feats = model.norm.features(data.points, data.masks).astype(model.dtype)
    with no_grad():
        for start in range(0, len(data), batch):
            sl = slice(start, start + batch)
            box, logit = model.forward_batch(*compact_rows(feats[sl], data.masks[sl]))
            boxes.append(box.data.astype(float))
            confs.append(0.5 * (1.0 + np.tanh(0.5 * logit.data.astype(float))))
    return np.vstack(boxes), np.concatenate(confs)


def _late_inputs(ego_model: DetectorNet, asst_model: DetectorNet, bundles: Sequence[SceneBundle],
                 ego: str, split: Optional[str]) -> tuple:
    other = "side" if ego == "rear" else "rear"
    ego_data = variant_data(bundles, ego, split)
    asst_data = variant_data(bundles, other, split)
    eb, ec = predict(ego_model, ego_data)
    ab, ac = predict(asst_model, asst_data)
    offsets = {b.scene_id: b for b in bundles}
    rows = []
    for j, (sid, i) in enumerate(ego_data.frames):
        off = offsets[sid].offset_into(ego, i)
        moved = BBox7.from_array(ab[j]).transformed(off.translation, off.yaw)
        rows.append(np.concatenate([eb[j], [ec[j]], moved.to_array(), [ac[j]]]))
    return np.array(rows), ego_data


def train_late(bundles: Sequence[SceneBundle], ego_model: DetectorNet, asst_model: DetectorNet,
               cfg: TrainConfig, weights: LossWeights = LossWeights(), ego: str = "rear",
               log: Optional[Callable] = None) -> TrainResult:
    """Train the decision MLP on frozen single-view outputs."""
    x_tr, d_tr = _late_inputs(ego_model, asst_model, bundles, ego, "train")
    try:
        x_va, d_va = _late_inputs(ego_model, asst_model, bundles, ego, "val")
    except ValueError:
        x_va, d_va = x_tr, d_tr
    res = fit_late_fusion(x_tr, d_tr.boxes, d_tr.labels, x_va, d_va.boxes, d_va.labels, cfg,
                          weights, log)
    res.variant = "late" if ego == "rear" else "late_side"
    res.members = {"ego": ego_model, "assistant": asst_model}
    return res


def fit_late_fusion(x_tr: np.ndarray, boxes_tr: np.ndarray, labels_tr: np.ndarray,
                    x_va: np.ndarray, boxes_va: np.ndarray, labels_va: np.ndarray,
                    cfg: TrainConfig, weights: LossWeights = LossWeights(),
                    log: Optional[Callable] = None) -> TrainResult:
    """Train the decision MLP on precomputed ``(N, 16)`` detection pairs."""
    net = LateFusionNet(seed=cfg.seed)
    net.fit_inputs(x_tr)
    net.norm = Normalizer.for_boxes(boxes_tr)

    def loss_on(x, boxes, labels):
        def fn(idx):
            box, logit = net.forward_batch(x[idx])
            return composite_loss(box, logit, boxes[idx], labels[idx], weights)
        return fn

    history, best_epoch, best_val = _run_epochs(
        net, loss_on(x_tr, boxes_tr, labels_tr), len(x_tr),
        lambda: _batched_eval(loss_on(x_va, boxes_va, labels_va), len(x_va)), cfg,
        np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1]), log)
    return TrainResult(net, history, best_epoch, best_val, "late", cfg)


def predict_late(result_or_net, ego_model, asst_model, bundles, ego: str = "rear",
                 split: Optional[str] = None) -> tuple:
    net = getattr(result_or_net, "model", result_or_net)
    x, data = _late_inputs(ego_model, asst_model, bundles, ego, split)
    with no_grad():
        box, logit = net.forward_batch(x)
    return box.data.astype(float), 0.5 * (1.0 + np.tanh(0.5 * logit.data.astype(float))), data


def train(bundles: Sequence[SceneBundle], variant: str, cfg: TrainConfig,
          weights: LossWeights = LossWeights(), use_intensity: bool = True,
          log: Optional[Callable] = None, members: Optional[dict] = None) -> TrainResult:
    """Train ``variant`` on the bundles' train split, selecting on the val split.

    ``late`` needs ``members={"ego": model, "assistant": model}`` unless they
    should be trained here first with the same config.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "late":
        members = members or {}
        ego_m = members.get("ego") or train(bundles, "rear", cfg, weights).model
        asst_m = members.get("assistant") or train(bundles, "side", cfg, weights).model
        return train_late(bundles, ego_m, asst_m, cfg, weights, "rear", log)
    tr = variant_data(bundles, variant, "train")
    try:
        va = variant_data(bundles, variant, "val")
    except ValueError:
        va = None
    return train_detector(tr, va, cfg, weights, use_intensity, log, variant)


def mean_iou(pred_boxes: np.ndarray, gt_boxes: np.ndarray) -> float:
    return float(np.mean([rotated_iou_3d(BBox7.from_array(p), BBox7.from_array(g))
                          for p, g in zip(pred_boxes, gt_boxes)]))


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(result: TrainResult, path) -> None:
    state = dict(result.model.state_dict())
    meta = {"variant": result.variant, "config": asdict(result.config),
            "norm": result.model.norm.to_dict(), "best_epoch": result.best_epoch}
    if isinstance(result.model, DetectorNet):
        meta["use_intensity"] = result.model.use_intensity
    else:
        meta["in_mean"] = list(map(float, result.model.in_mean))
        meta["in_std"] = list(map(float, result.model.in_std))
        for role, m in result.members.items():
            for k, v in m.state_dict().items():
                state[f"{role}/{k}"] = v
            meta[f"{role}_norm"] = m.norm.to_dict()
            meta[f"{role}_use_intensity"] = m.use_intensity
    checkpoint.save(path, state, meta)


def load_checkpoint(path) -> tuple:
    """Returns ``(model, meta, members)``; members is empty for single-model variants."""
    state, meta = checkpoint.load(path)
    members = {}
    if meta["variant"] in ("late", "late_side"):
        for role in ("ego", "assistant"):
            m = DetectorNet(use_intensity=meta[f"{role}_use_intensity"])
            m.load_state_dict({k.split("/", 1)[1]: v for k, v in state.items()
                               if k.startswith(role + "/")})
            m.norm = Normalizer.from_dict(meta[f"{role}_norm"])
            m.eval()
            members[role] = m
        model = LateFusionNet()
        model.load_state_dict({k: v for k, v in state.items() if "/" not in k})
        model.in_mean = np.asarray(meta["in_mean"])
        model.in_std = np.asarray(meta["in_std"])
    else:
        model = DetectorNet(use_intensity=meta.get("use_intensity", True))
        model.load_state_dict(state)
    model.norm = Normalizer.from_dict(meta["norm"])
    model.eval()
    return model, meta, members
