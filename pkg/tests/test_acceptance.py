"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the summary at the
end of the session lists every criterion.
"""

import json
import math
import statistics
import time

import numpy as np
import pytest
import torch

from semicurv import cli
from semicurv.data import SplitSpec, SyntheticConfig, f1, generate_synthetic, iou, make_splits
from semicurv.geometry import AffineTransform, align, mirror_index, warp
from semicurv.losses import NPairConfig, cosine_sim, dice_loss, mse_consistency, npair_loss, wbce_loss
from semicurv.model import BackboneConfig, StudentTeacherPair
from semicurv.posenc import PositionalEncoding
from semicurv.trainer import ScheduleState, TrainConfig, fit, gamma, lr_at, train_step

D = torch.float64


def central_jacobian(fn, x, eps=1e-6):
    flat = x.detach().reshape(-1)
    cols = []
    for i in range(flat.numel()):
        xp, xm = flat.clone(), flat.clone()
        xp[i] += eps
        xm[i] -= eps
        cols.append((fn(xp.reshape(x.shape)) - fn(xm.reshape(x.shape))).reshape(-1) / (2 * eps))
    return torch.stack(cols, dim=1)


def relative_error(analytic, numeric):
    return float((analytic - numeric).abs().max() / numeric.abs().max().clamp_min(1e-12))


def test_c01_mirror_example(criterion):
    text = "abcd"
    decoded = "".join(text[int(i)] for i in mirror_index(np.arange(-3, 7), 4))
    criterion(1, "mirror extrapolation over 'abcd'", decoded == "dcbabcdcba", f"-3..6 -> {decoded}")


def test_c02_warp_gradient(criterion):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        img = torch.tensor(rng.random((1, 8, 8)), dtype=D)
        t = (
            AffineTransform.translate(*rng.uniform(-2, 2, 2))
            @ AffineTransform.rotate(rng.uniform(-180, 180))
            @ AffineTransform.shear(rng.uniform(-10, 10))
            @ AffineTransform.scale(rng.uniform(0.8, 1.2))
        ).about(3.5, 3.5)
        analytic = torch.autograd.functional.jacobian(lambda x: warp(x, t).reshape(-1), img).reshape(64, 64)
        numeric = central_jacobian(lambda x: warp(x, t), img)
        worst = max(worst, relative_error(analytic, numeric))
    criterion(2, "warp gradient vs central differences", worst < 1e-4, f"max rel err {worst:.2e} < 1e-4")


def test_c03_exact_round_trip(criterion):
    rng = np.random.default_rng(3)
    worst, cases = 0.0, 0
    for size in (8, 9, 16):
        c = (size - 1) / 2
        for k in range(4):
            for dx, dy in ((0, 0), (1, -2), (-3, 0), (2, 3)):
                m = rng.random((1, size, size))
                t = AffineTransform.translate(dx, dy) @ AffineTransform.rotate(90 * k).about(c, c)
                back = align(warp(m, t), t)
                # pixels whose image under t stays inside the frame
                ys, xs = np.meshgrid(np.arange(size, dtype=float), np.arange(size, dtype=float), indexing="ij")
                fwd = t.apply(np.stack([xs, ys], axis=-1))
                inside = np.all((fwd >= 0) & (fwd <= size - 1), axis=-1)
                worst = max(worst, float(np.abs(back[0] - m[0])[inside].max()))
                cases += 1
    criterion(3, "align(warp(m,t),t) == m for quarter turns and integer shifts", worst <= 1e-12,
              f"{cases} cases, max err {worst:.1e}")


def test_c04_collapse_arithmetic(criterion):
    tau = 0.5
    cfg = NPairConfig(temperature=tau)
    ok, notes = True, []
    for nb in (2, 4, 8, 16):
        for fill in (0.0, 1.0):
            c = torch.full((nb, 16, 16), fill, dtype=D)
            collapsed = float(npair_loss(c, c.clone(), cfg))
            ok &= abs(collapsed - math.log(nb)) <= 1e-6
            ok &= float(mse_consistency(c, c.clone())) == 0.0
        masks = torch.zeros(nb, 16, 16, dtype=D)
        for i in range(nb):
            masks[i, i, 2:10] = 1.0
        eps_hat = statistics.mean(
            float(cosine_sim(masks[i], masks[j])) for i in range(nb) for j in range(nb) if i != j
        )
        matched = float(npair_loss(masks, masks.clone(), cfg))
        closed = math.log1p((nb - 1) * math.exp((eps_hat - 1) / tau))
        ok &= abs(matched - closed) <= 1e-3
        ok &= matched < math.log(nb)
        notes.append(f"N={nb}: {matched:.4f} vs ln N {math.log(nb):.4f}")
    criterion(4, "N-pair collapse arithmetic", ok, "; ".join(notes))


def test_c05_loss_gradients(criterion):
    g = torch.Generator().manual_seed(5)
    student = torch.rand(3, 8, 8, generator=g, dtype=D) * 0.9 + 0.05
    teacher = torch.rand(3, 8, 8, generator=g, dtype=D)
    target = (torch.rand(3, 8, 8, generator=g, dtype=D) > 0.8).to(D)
    fns = {
        "dice": lambda x: dice_loss(x, target),
        "wbce": lambda x: wbce_loss(x, target),
        "npair-cosine": lambda x: npair_loss(x, teacher, NPairConfig(similarity="cosine")),
        "npair-l2": lambda x: npair_loss(x, teacher, NPairConfig(similarity="l2")),
        "mse": lambda x: mse_consistency(x, teacher),
    }
    errs = {}
    for name, fn in fns.items():
        x = student.clone().requires_grad_(True)
        (analytic,) = torch.autograd.grad(fn(x), x)
        numeric = central_jacobian(fn, student).reshape(student.shape)
        errs[name] = relative_error(analytic, numeric)
    worst = max(errs.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    criterion(5, "loss gradients vs central differences", worst < 1e-4, detail)


def test_c06_schedules(criterion):
    ok = abs(gamma(0, 500) - math.exp(-10)) <= 1e-9 and gamma(500, 500) == 1.0
    vals = [gamma(t, 500) for t in range(1200)]
    ok &= all(a <= b for a, b in zip(vals, vals[1:]))
    ok &= (lr_at(499, 1e-3), lr_at(500, 1e-3), lr_at(999, 1e-3), lr_at(1000, 1e-3)) == (1e-3, 5e-4, 5e-4, 2.5e-4)

    class Scalar(torch.nn.Module):
        def __init__(self, v):
            super().__init__()
            self.w = torch.nn.Parameter(torch.tensor(v, dtype=D))

    alpha, theta, start = 0.999, 0.7, -0.3
    pair = StudentTeacherPair(Scalar(theta), teacher=Scalar(start), ema_alpha=alpha)
    worst = 0.0
    for k in range(1, 1001):
        pair.ema_update()
        expected = alpha**k * abs(start - theta)
        worst = max(worst, abs(abs(float(pair.teacher.w) - theta) - expected))
    ok &= worst <= 1e-9
    criterion(6, "gamma ramp, lr halving, EMA closed form", ok, f"EMA max dev {worst:.1e} over 1000 steps")


def test_c07_metric_identities(criterion):
    rng = np.random.default_rng(7)
    worst_identity, mismatches = 0.0, 0
    for _ in range(1000):
        pred = rng.random((12, 12)) < rng.uniform(0, 1)
        target = rng.random((12, 12)) < rng.uniform(0, 0.5)
        i, f = iou(pred.astype(float), target), f1(pred.astype(float), target)
        worst_identity = max(worst_identity, abs(f - 2 * i / (1 + i)))
        tp = fp = fn = 0
        for p, y in zip(pred.ravel(), target.ravel()):
            tp += p and y
            fp += p and not y
            fn += y and not p
        oracle_iou = tp / (tp + fp + fn) if tp + fp + fn else 1.0
        oracle_f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 1.0
        mismatches += abs(i - oracle_iou) > 1e-12 or abs(f - oracle_f1) > 1e-12
    ok = worst_identity <= 1e-12 and mismatches == 0
    criterion(7, "F1 = 2 IoU/(1+IoU) and confusion oracle", ok,
              f"max identity dev {worst_identity:.1e}, {mismatches} oracle mismatches")


# desk-scale semi-supervised experiment

DESK = dict(
    epochs=200,
    ramp_epochs=100,
    lr=0.02,
    batch_labelled=2,
    batch_unlabelled=4,
    ema_alpha=0.99,
    val_every=2,
)
NO_ENC = PositionalEncoding("none")
DESK_RUNS = {
    "baseline": dict(consistency="none", model=BackboneConfig(base_channels=16, encoding=NO_ENC)),
    "mt-mse": dict(consistency="mse", model=BackboneConfig(base_channels=16, encoding=NO_ENC)),
    "semicurv": dict(consistency="npair", model=BackboneConfig(base_channels=16, encoding=PositionalEncoding("sinusoid", 4))),
}
SEEDS = (0, 1, 2)


@pytest.mark.slow
def test_c08_desk_scale_ssl_gain(criterion):
    data = generate_synthetic(SyntheticConfig(size=64, seed=0), 280)
    splits = make_splits(data, SplitSpec(labelled_fraction=0.05, seed=0, n_val=40, n_test=40))
    assert (len(splits.labelled), len(splits.unlabelled), len(splits.val), len(splits.test)) == (10, 190, 40, 40)
    start = time.perf_counter()
    scores = {}
    for name, extra in DESK_RUNS.items():
        scores[name] = []
        for seed in SEEDS:
            report = fit(splits, TrainConfig(**DESK, **extra, seed=seed))
            scores[name].append(100 * report.test["iou"])
            print(f"  {name} seed {seed}: test IoU {scores[name][-1]:.1f} ({report.seconds:.0f}s)", flush=True)
    minutes = (time.perf_counter() - start) / 60
    med = {k: statistics.median(v) for k, v in scores.items()}
    ok = med["semicurv"] >= med["baseline"] + 2.0 and med["semicurv"] >= med["mt-mse"] - 1.0
    detail = (
        f"median test IoU semicurv {med['semicurv']:.1f}, baseline {med['baseline']:.1f}, "
        f"mt-mse {med['mt-mse']:.1f}; {minutes:.1f} min"
    )
    criterion(8, "desk-scale SSL gain", ok, detail)


def test_c09_system_level_collapse(criterion):
    class Constant(torch.nn.Module):
        def __init__(self):
            super().__init__()
            self.bias = torch.nn.Parameter(torch.tensor(-4.0))

        def forward(self, x):
            return torch.sigmoid(self.bias).expand(x.shape[0], 1, *x.shape[-2:])

    data = generate_synthetic(SyntheticConfig(size=32, positive_ratio=(0.02, 0.2), seed=9), 10)
    x_l, y_l = data.tensors(range(2))
    x_u, _ = data.tensors(range(2, 10))
    out = {}
    for kind in ("mse", "npair"):
        pair = StudentTeacherPair(Constant())
        opt = torch.optim.SGD(pair.student.parameters(), lr=0.0)
        cfg = TrainConfig(consistency=kind, batch_unlabelled=8, model=BackboneConfig(base_channels=4, depth=2))
        out[kind] = train_step((x_l, y_l), x_u, pair, opt, cfg, ScheduleState(0, 1.0, 0.0),
                               np.random.default_rng(0)).l_unsup
    ok = out["mse"] == 0.0 and abs(out["npair"] - math.log(8)) <= 1e-6
    criterion(9, "constant model: MSE consistency 0, N-pair ln N_B", ok,
              f"mse {out['mse']}, npair {out['npair']:.6f} vs ln 8 {math.log(8):.6f}")


def test_c10_determinism(criterion, tmp_path):
    cfg = tmp_path / "det.txt"
    cfg.write_text(
        "epochs = 6\nramp_epochs = 3\nlr = 0.05\nbatch_labelled = 2\nbatch_unlabelled = 4\n"
        "ema_alpha = 0.99\nmodel.base_channels = 8\ndeterministic = true\n"
        "data.n_train = 40\ndata.n_val = 8\ndata.n_test = 8\ndata.size = 32\ndata.label_frac = 0.1\n"
    )
    logs, manifests = [], []
    for name in ("first", "second"):
        assert cli.main(["train", "--config", str(cfg), "--output", str(tmp_path), "--name", name, "--quiet"]) == 0
        lines = (tmp_path / name / "log.jsonl").read_text().splitlines()
        logs.append([{k: r[k] for k in ("epoch", "l_sup", "l_unsup", "l_total")} for r in map(json.loads, lines)])
        m = json.loads((tmp_path / name / "manifest.json").read_text())
        m.pop("output_dir")
        manifests.append(m)
    ok = manifests[0] == manifests[1] and logs[0] == logs[1] and len(logs[0]) >= 5
    criterion(10, "identical manifests give identical loss logs", ok, f"{len(logs[0])} epochs compared")
