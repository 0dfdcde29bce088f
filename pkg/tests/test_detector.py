import math

import numpy as np
import pytest

from coverap.boxes import BBox7
from coverap.dataset import SceneLayout, synth_scenario
from coverap.detector import (
    CONF_MIN_POINTS,
    Detection,
    DetectorNet,
    FrameInput,
    LateFusionNet,
    Normalizer,
    TrainingDivergence,
    VariantData,
    compact_rows,
    fit_late_fusion,
    forward,
    late_fuse,
    late_input,
    load_checkpoint,
    mean_iou,
    middle_fuse_inputs,
    points_inside,
    predict,
    save_checkpoint,
    train_detector,
    train_late,
    variant_data,
)
from coverap.nn import Tensor, grad_check
from coverap.nn import tensor as T
from coverap.nn.layers import masked_mean
from coverap.nn.losses import composite_loss
from coverap.nn.optim import TrainConfig
from coverap.radar_dsp import PointFrame
from coverap.sync_align import RigidOffset


def random_points(rng, n):
    xyz = np.column_stack([rng.uniform(-3, 3, n), rng.uniform(4, 20, n), rng.uniform(-1, 1.5, n)])
    return np.column_stack([xyz, np.linalg.norm(xyz, axis=1), rng.normal(0, 2, n),
                            np.degrees(np.arctan2(xyz[:, 0], xyz[:, 1])),
                            10 ** rng.uniform(7, 11, n)])


def random_frame(rng, n_valid, n_rows=70):
    pts = np.zeros((n_rows, 7))
    pts[:n_valid] = random_points(rng, n_valid)
    mask = np.arange(n_rows) < n_valid
    return FrameInput.from_points(pts, mask)


def fitted_model(seed=0, use_intensity=True, dtype=np.float32):
    rng = np.random.default_rng(100 + seed)
    pts = random_points(rng, 200)[None]
    m = DetectorNet(seed=seed, use_intensity=use_intensity, dtype=dtype)
    m.norm = Normalizer.fit(pts, np.ones((1, 200), bool),
                            np.tile([1.8, 1.5, 4.5, 0.0, 10.0, 0.2, math.pi / 2], (4, 1))
                            + rng.normal(0, 0.5, (4, 7)))
    return m.eval()


@pytest.fixture(scope="module")
def model():
    return fitted_model()


def test_parameter_shapes(model):
    shapes = {k: v.shape for k, v in model.state_dict().items()}
    assert model.n_parameters() == sum(int(np.prod(s)) for s in shapes.values())
    assert shapes["pos.0.lin.weight"] == (3, 64)
    assert shapes["dyn.2.lin.weight"] == (128, 256)
    assert shapes["inten.0.lin.weight"] == (1, 256)
    assert shapes["scorer.weight"] == (256, 1)
    assert shapes["fuse.weight"] == (512, 256)
    assert shapes["bbox_head.0.weight"] == (512, 1024)
    assert shapes["bbox_head.2.weight"] == (512, 7)
    assert shapes["conf_head.1.weight"] == (128, 1)
    late = LateFusionNet()
    dims = [v.shape for k, v in late.state_dict().items() if k.endswith("weight")]
    assert dims == [(16, 128), (128, 64), (64, 8)]


def test_frame_input_validation():
    with pytest.raises(ValueError):
        FrameInput(np.ones((2, 3)), np.zeros((2, 3)), np.zeros((2, 1)), [True, False])
    with pytest.raises(ValueError):
        FrameInput(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 1)), [False, False])
    pts = random_points(np.random.default_rng(0), 3)
    f = FrameInput.from_points(pts, np.ones(3, bool))
    assert np.allclose(f.points(), pts)
    assert np.allclose(f.dynamics[:, 0], pts[:, 4])


# intensity attention

def test_att_w_equal_scores_and_single_point(model):
    f = random_frame(np.random.default_rng(1), 2, 4)
    pts = f.points()
    pts[1, 6] = pts[0, 6]
    feats = model.norm.features(pts[None], f.mask[None]).astype(np.float32)
    *_, att = model.encode_branches(feats, f.mask[None])
    assert np.allclose(att.data[0], [0.5, 0.5, 0, 0], atol=1e-7)
    *_, att = model.encode_branches(feats[:, :1], f.mask[None, :1])
    assert att.data[0, 0] == pytest.approx(1.0)


def test_att_w_follows_scorer(model):
    # the scorer is a learned function of intensity; wherever it is increasing,
    # raising a point's intensity must raise its weight
    levels = np.linspace(7, 11, 9)
    pts = random_points(np.random.default_rng(2), 1).repeat(len(levels), axis=0)
    pts[:, 6] = 10 ** levels
    mask = np.ones((1, len(levels)), bool)
    feats = model.norm.features(pts[None], mask).astype(np.float32)
    *_, att = model.encode_branches(feats, mask)
    inten = model.inten(Tensor(feats[..., 6:7]))
    scores = model.scorer(inten).data.reshape(-1)
    assert np.argmax(att.data[0]) == np.argmax(scores)
    order = np.argsort(scores)
    assert np.all(np.diff(att.data[0][order]) >= 0)
    with pytest.raises(ValueError):
        model.encode_branches(feats, np.zeros_like(mask))


# forward invariants

def test_permutation_invariance(model):
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = random_frame(rng, int(rng.integers(1, 71)))
        perm = rng.permutation(70)
        g = FrameInput.from_points(f.points()[perm], f.mask[perm])
        a, b = forward(f, model).to_array(), forward(g, model).to_array()
        assert np.allclose(a, b, atol=1e-5, rtol=1e-5)


def test_masked_rows_have_no_influence(model):
    rng = np.random.default_rng(4)
    for n in (1, 5, 40):
        f = random_frame(rng, n, 70)
        short = FrameInput.from_points(f.points()[:n], f.mask[:n])
        wide = FrameInput.from_points(np.vstack([f.points(), np.zeros((70, 7))]),
                                      np.concatenate([f.mask, np.zeros(70, bool)]))
        ref = forward(f, model).to_array()
        assert np.allclose(forward(short, model).to_array(), ref, atol=1e-5)
        assert np.allclose(forward(wide, model).to_array(), ref, atol=1e-5)


def test_compact_rows_exact(model):
    rng = np.random.default_rng(5)
    frames = [random_frame(rng, n) for n in (3, 17, 1)]
    pts = np.stack([f.points() for f in frames])
    masks = np.stack([f.mask for f in frames])
    perm = rng.permutation(70)
    pts, masks = pts[:, perm], masks[:, perm]
    feats = model.norm.features(pts, masks).astype(np.float32)
    fc, mc = compact_rows(feats, masks)
    assert fc.shape[1] == 17 and mc.sum() == masks.sum()
    a = model.forward_batch(feats, masks)
    b = model.forward_batch(fc, mc)
    assert np.allclose(a[0].data, b[0].data, atol=1e-5)
    assert np.allclose(a[1].data, b[1].data, atol=1e-5)


def test_duplication_keeps_context(model):
    rng = np.random.default_rng(6)
    f = random_frame(rng, 6, 6)
    feats = model.norm.features(f.points()[None], f.mask[None]).astype(np.float32)
    dup = np.concatenate([feats, feats], axis=1)

    def context(x, m):
        pos, dyn, _, _ = model.encode_branches(x, m)
        h = model.attn(model.fuse(T.concat([pos, dyn], axis=-1)), m)
        return masked_mean(h, m).data

    m1 = np.ones((1, 6), bool)
    assert np.allclose(context(feats, m1), context(dup, np.ones((1, 12), bool)), atol=1e-5)
    assert np.allclose(forward(f, model).to_array(),
                       forward(FrameInput.from_points(np.vstack([f.points()] * 2),
                                                      np.ones(12, bool)), model).to_array(),
                       atol=1e-5)


def test_output_validity_extreme_parameters():
    rng = np.random.default_rng(7)
    for scale in (0.0, 1.0, 30.0):
        m = fitted_model(1)
        for p in m.parameters():
            p.data[...] = rng.normal(0, scale, p.data.shape)
        for _ in range(5):
            det = forward(random_frame(rng, int(rng.integers(1, 71))), m)
            a = det.to_array()
            assert np.all(np.isfinite(a))
            assert det.bbox.w > 0 and det.bbox.h > 0 and det.bbox.l > 0
            assert 0.0 <= det.confidence <= 1.0


def test_train_mode_uses_dropout(model):
    f = random_frame(np.random.default_rng(8), 10)
    model.set_dropout_rng(np.random.default_rng(0))
    a = forward(f, model, "train").to_array()
    b = forward(f, model, "eval").to_array()
    assert not np.allclose(a, b)
    assert not model.training
    with pytest.raises(ValueError):
        forward(f, model, "test")


GOLDEN = [2.0292773, 1.8504342, 4.5769229, -0.043963477, 9.6235685, -0.14704409, 1.661803,
          0.50203313]


def test_golden_vector():
    m = fitted_model(0)
    f = random_frame(np.random.default_rng(2024), 9)
    assert np.allclose(forward(f, m).to_array(), GOLDEN, rtol=1e-4, atol=1e-5)


def test_end_to_end_gradient():
    m = fitted_model(2, dtype=np.float64)
    m.train(False)
    f = random_frame(np.random.default_rng(9), 4, 4)
    feats = m.norm.features(f.points()[None], f.mask[None])
    tgt = np.array([[1.8, 1.5, 4.5, 0.3, 10.5, 0.1, 1.5]])
    label = np.array([1.0])

    def loss(x):
        box, logit = m.forward_batch(x, f.mask[None])
        return composite_loss(box, logit, tgt, label)[0]

    assert grad_check(loss, feats) <= 1e-3
    # parameter gradients against central differences on sampled coordinates
    m.zero_grad()
    loss(Tensor(feats)).backward()
    rng = np.random.default_rng(0)
    worst = 0.0
    for name, p in m.named_parameters():
        flat = p.data.reshape(-1)
        g = p.grad.reshape(-1)
        for i in rng.choice(flat.size, min(3, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + 1e-6
            up = float(loss(Tensor(feats)).data)
            flat[i] = old - 1e-6
            down = float(loss(Tensor(feats)).data)
            flat[i] = old
            num = (up - down) / 2e-6
            worst = max(worst, abs(num - g[i]) / max(abs(num), abs(g[i]), 1e-6))
    assert worst <= 1e-3


# middle fusion

def test_middle_fuse_empty_assistant_and_identical_frames():
    pts = random_points(np.random.default_rng(10), 12)
    ego = PointFrame(0, pts)
    fi = middle_fuse_inputs(ego, PointFrame(0, np.zeros((0, 7))), RigidOffset())
    assert fi.n == 140 and not fi.mask[70:].any() and fi.mask[:12].all()
    fi = middle_fuse_inputs(ego, ego, RigidOffset())
    assert np.allclose(fi.points()[:70], fi.points()[70:])
    with pytest.raises(ValueError):
        middle_fuse_inputs(PointFrame(0, np.zeros((0, 7))), PointFrame(0, np.zeros((0, 7))),
                           RigidOffset())


def test_middle_fuse_moves_assistant():
    p = np.array([[0.0, 5.0, 0.0, 5.0, 1.0, 0.0, 3.0]])
    fi = middle_fuse_inputs(PointFrame(0, p), PointFrame(0, p), RigidOffset((-5.0, 3.0, 0.0)))
    assert np.allclose(fi.position[70], [-5.0, 8.0, 0.0])
    assert fi.dynamics[70, 0] == 1.0 and fi.intensity[70, 0] == 3.0


@pytest.fixture(scope="module")
def clear_scene():
    return synth_scenario(21, n_frames=150, fill=True, layout=SceneLayout(occlusion_rate={}))


def test_middle_fuse_sees_more_of_the_target(clear_scene):
    b = clear_scene
    better = 0
    for i in range(len(b)):
        gt = b.ground_truth[i]
        fi = middle_fuse_inputs(b.frame("rear", i), b.frame("side", i), b.offset_into("rear", i))
        fused = points_inside(fi.points(), fi.mask, gt)
        rear = points_inside(b.points["rear"][i], b.masks["rear"][i], gt)
        side = points_inside(b.points["side"][i], b.masks["side"][i], b.gt_in("side", i))
        better += fused > max(rear, side)
    assert better / len(b) >= 0.6


def test_variant_data_alignment_and_labels(clear_scene):
    rear = variant_data([clear_scene], "rear")
    fused = variant_data([clear_scene], "fused_rear")
    side = variant_data([clear_scene], "side")
    assert rear.frames == fused.frames == side.frames
    assert np.array_equal(rear.boxes, fused.boxes)
    assert fused.points.shape[1:] == (140, 7)
    for d in (rear, fused):
        for p, m, box, lab in zip(d.points, d.masks, d.boxes, d.labels):
            assert lab == float(points_inside(p, m, BBox7.from_array(box)) >= CONF_MIN_POINTS)
    with pytest.raises(ValueError):
        variant_data([clear_scene], "late")


# late fusion

def test_late_fuse_random_params_valid():
    rng = np.random.default_rng(11)
    net = LateFusionNet(seed=3)
    for _ in range(10):
        e = Detection(BBox7(1.8, 1.5, 4.5, *rng.normal(0, 3, 3), 1.5), float(rng.random()))
        a = Detection(BBox7(1.9, 1.4, 4.4, *rng.normal(0, 3, 3), 1.6), float(rng.random()))
        out = late_fuse(e, a, RigidOffset((-5, 3, 0)), net)
        assert np.all(np.isfinite(out.to_array())) and 0 <= out.confidence <= 1
        assert min(out.bbox.w, out.bbox.h, out.bbox.l) > 0
    assert late_input(e, a).shape == (16,)


def _noisy_detections(rng, n, offset):
    truth = np.column_stack([rng.uniform(1.7, 2.0, n), rng.uniform(1.4, 1.8, n),
                             rng.uniform(3.9, 5.0, n), rng.uniform(-1, 1, n),
                             rng.uniform(6, 16, n), rng.uniform(0.1, 0.4, n),
                             math.pi / 2 + rng.uniform(-0.05, 0.05, n)])
    ego = truth + rng.normal(0, 1, truth.shape) * [0.1, 0.1, 0.2, 0.8, 0.8, 0.2, 0.05]
    asst = truth + rng.normal(0, 1, truth.shape) * [0.05, 0.05, 0.1, 0.15, 0.15, 0.05, 0.02]
    inv = offset.inverse()
    asst_local = [BBox7.from_array(b).transformed(inv.translation, inv.yaw) for b in asst]
    rows = []
    for e, a in zip(ego, asst_local):
        moved = a.transformed(offset.translation, offset.yaw).to_array()
        rows.append(np.concatenate([e, [0.6], moved, [0.9]]))
    return np.array(rows), truth, ego, asst_local


def test_late_fusion_learns_noise_asymmetry():
    rng = np.random.default_rng(12)
    off = RigidOffset((-5.0, 3.0, 0.0))
    x_tr, y_tr, _, _ = _noisy_detections(rng, 3000, off)
    x_te, y_te, ego, asst = _noisy_detections(rng, 200, off)
    cfg = TrainConfig(epochs=80, batch_size=64, learning_rate=1e-3, seed=0)
    res = fit_late_fusion(x_tr, y_tr, np.ones(3000), x_te[:100], y_te[:100], np.ones(100), cfg)
    net = res.model
    fused = np.array([late_fuse(Detection(BBox7.from_array(e), 0.6), Detection(a, 0.9), off,
                                net).bbox.to_array() for e, a in zip(ego[100:], asst[100:])])
    asst_ego = np.array([a.transformed(off.translation, off.yaw).to_array() for a in asst[100:]])
    single = max(mean_iou(ego[100:], y_te[100:]), mean_iou(asst_ego, y_te[100:]))
    assert mean_iou(fused, y_te[100:]) >= single - 0.02


# training

def tiny_data(seed, n=12, rows=8):
    rng = np.random.default_rng(seed)
    pts = np.zeros((n, rows, 7))
    masks = np.zeros((n, rows), bool)
    boxes = []
    for i in range(n):
        k = int(rng.integers(2, rows + 1))
        centre = np.array([rng.uniform(-1, 1), rng.uniform(7, 14), 0.25])
        xyz = centre + rng.normal(0, 0.6, (k, 3))
        pts[i, :k] = np.column_stack([xyz, np.linalg.norm(xyz, axis=1), rng.normal(0, 1, k),
                                      np.degrees(np.arctan2(xyz[:, 0], xyz[:, 1])),
                                      10 ** rng.uniform(8, 10, k)])
        masks[i, :k] = True
        boxes.append([1.8, 1.5, 4.5, *centre, math.pi / 2])
    boxes = np.array(boxes)
    labels = np.array([float(points_inside(p, m, BBox7.from_array(b)) >= CONF_MIN_POINTS)
                       for p, m, b in zip(pts, masks, boxes)])
    return VariantData(pts, masks, boxes, labels, [("t", i) for i in range(n)])


def test_training_is_deterministic():
    cfg = TrainConfig(epochs=3, batch_size=4, seed=5)
    a = train_detector(tiny_data(0), tiny_data(1), cfg)
    b = train_detector(tiny_data(0), tiny_data(1), cfg)
    assert a.metrics_json() == b.metrics_json()
    assert [r["epoch"] for r in a.history] == [1, 2, 3]
    assert set(a.history[0]) == {"epoch", "train_loss", "val_loss", "lr"}
    c = train_detector(tiny_data(0), tiny_data(1), TrainConfig(epochs=3, batch_size=4, seed=6))
    assert c.metrics_json() != a.metrics_json()


def test_divergence_names_batch():
    d = tiny_data(2)
    d.points[3, 0, 0] = np.nan
    with pytest.raises((TrainingDivergence, ValueError)):
        train_detector(d, None, TrainConfig(epochs=1, batch_size=4))


def test_best_checkpoint_retained():
    cfg = TrainConfig(epochs=4, batch_size=4, seed=1)
    res = train_detector(tiny_data(3), tiny_data(4), cfg)
    assert res.best_val == min(r["val_loss"] for r in res.history)
    assert res.history[res.best_epoch - 1]["val_loss"] == res.best_val


def test_checkpoint_round_trip(tmp_path):
    cfg = TrainConfig(epochs=2, batch_size=4, seed=2)
    data = tiny_data(5)
    res = train_detector(data, None, cfg, use_intensity=False)
    save_checkpoint(res, tmp_path / "m.json")
    model, meta, members = load_checkpoint(tmp_path / "m.json")
    assert meta["variant"] == "rear" and members == {} and model.use_intensity is False
    assert np.allclose(predict(model, data)[0], predict(res.model, data)[0], atol=1e-6)


def test_late_training_freezes_members(clear_scene, tmp_path):
    cfg = TrainConfig(epochs=1, batch_size=32, seed=0)
    ego = fitted_model(3)
    asst = fitted_model(4)
    before = [{k: v.copy() for k, v in m.state_dict().items()} for m in (ego, asst)]
    res = train_late([clear_scene], ego, asst, cfg)
    for m, snap in zip((ego, asst), before):
        for k, v in m.state_dict().items():
            assert np.array_equal(v, snap[k])
    save_checkpoint(res, tmp_path / "late.json")
    net, meta, members = load_checkpoint(tmp_path / "late.json")
    assert meta["variant"] == "late" and set(members) == {"ego", "assistant"}
    x = np.ones((1, 16))
    assert np.allclose(net.forward_batch(x)[0].data, res.model.forward_batch(x)[0].data)
