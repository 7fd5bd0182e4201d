import pytest
import torch

from semicurv.model import (
    BackboneConfig,
    ResUNet,
    StudentTeacherPair,
    ema_update,
    init_pair,
    parameter_count,
)
from semicurv.posenc import PositionalEncoding

NO_ENC = PositionalEncoding("none")


def test_forward_shape_and_range():
    pair = init_pair(BackboneConfig(base_channels=8), seed=0)
    pair.student.eval()
    x = torch.rand(1, 1, 64, 64)
    y = pair.student(x)
    assert y.shape == (1, 1, 64, 64)
    assert torch.all((y > 0) & (y < 1))
    assert torch.isfinite(y).all()


def test_forward_single_image_and_odd_size():
    model = ResUNet(BackboneConfig(base_channels=4, depth=3)).eval()
    y = model(torch.rand(1, 30, 45))
    assert y.shape == (1, 30, 45)


def test_batch_consistency_eval():
    model = init_pair(BackboneConfig(base_channels=8), seed=1).student.eval()
    x = torch.rand(4, 1, 32, 32)
    with torch.no_grad():
        batched = model(x)
        for i in range(4):
            torch.testing.assert_close(batched[i : i + 1], model(x[i : i + 1]), atol=1e-6, rtol=0)


def test_channel_mismatch():
    model = ResUNet(BackboneConfig(in_channels=3, base_channels=4))
    with pytest.raises(ValueError):
        model(torch.rand(1, 1, 16, 16))


def test_encoder_channels_with_encoding():
    cfg = BackboneConfig(base_channels=16, depth=4)
    assert cfg.encoder_channels() == [16 * 2**s + 2 for s in range(4)]
    model = ResUNet(cfg)
    # each stage after the first consumes the previous stage plus its 2 coordinate channels
    for s in range(1, 4):
        assert model.encoder[s].conv1.in_channels == 16 * 2 ** (s - 1) + 2
    seen = []
    hooks = [b.register_forward_hook(lambda m, i, o: seen.append(o.shape[1])) for b in model.encoder]
    model.eval()(torch.rand(1, 1, 32, 32))
    for h in hooks:
        h.remove()
    assert seen == [16, 32, 64, 128]  # before the coordinate channels are appended
    assert BackboneConfig(encoding=NO_ENC).encoder_channels() == [16, 32, 64, 128]


def test_parameter_count_grows_with_width():
    small = parameter_count(ResUNet(BackboneConfig(base_channels=8)))
    big = parameter_count(ResUNet(BackboneConfig(base_channels=16)))
    assert 0 < small < big


def test_translation_covariance_without_encoding():
    cfg = BackboneConfig(base_channels=8, encoding=NO_ENC)
    model = init_pair(cfg, seed=2, dtype=torch.float64).student.eval()
    big = torch.rand(1, 1, 232, 232, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    a = big[..., :224, :224]
    b = big[..., 8:, 8:]
    with torch.no_grad():
        ya, yb = model(a), model(b)
    # b is a shifted by 8px: compare well inside the receptive-field margin
    diff = (ya[..., 8 + 96 : 224 - 96, 8 + 96 : 224 - 96] - yb[..., 96 : 224 - 104, 96 : 224 - 104]).abs().max()
    assert float(diff) < 1e-5


def test_positional_encoding_breaks_translation_covariance():
    cfg = BackboneConfig(base_channels=4, depth=2)
    model = init_pair(cfg, seed=3, dtype=torch.float64).student.eval()
    x = torch.zeros(1, 1, 16, 16, dtype=torch.float64)
    with torch.no_grad():
        y = model(x)
    # constant input: any spatial variation comes from the coordinates
    assert float(y.std()) > 0


def test_init_pair_teacher_matches_student():
    pair = init_pair(BackboneConfig(base_channels=8), seed=4)
    x = torch.rand(2, 1, 32, 32)
    pair.student.eval()
    with torch.no_grad():
        torch.testing.assert_close(pair.student(x), pair.teacher(x), atol=0, rtol=0)
    assert all(not p.requires_grad for p in pair.teacher.parameters())
    assert all(p.requires_grad for p in pair.student.parameters())


def test_init_pair_seeding():
    a = init_pair(BackboneConfig(base_channels=4), seed=5).student.state_dict()
    b = init_pair(BackboneConfig(base_channels=4), seed=5).student.state_dict()
    c = init_pair(BackboneConfig(base_channels=4), seed=6).student.state_dict()
    assert all(torch.equal(a[k], b[k]) for k in a)
    assert any(not torch.equal(a[k], c[k]) for k in a if a[k].is_floating_point())


def test_init_pair_does_not_touch_global_rng():
    torch.manual_seed(123)
    expected = torch.rand(3)
    torch.manual_seed(123)
    init_pair(BackboneConfig(base_channels=4), seed=9)
    assert torch.equal(torch.rand(3), expected)


class Scalar(torch.nn.Module):
    def __init__(self, value):
        super().__init__()
        self.w = torch.nn.Parameter(torch.tensor([value], dtype=torch.float64))


def test_ema_fixed_point():
    pair = StudentTeacherPair(Scalar(0.3), ema_alpha=0.999)
    ema_update(pair)
    assert float(pair.teacher.w) == 0.3


def test_ema_alpha_zero_copies():
    pair = StudentTeacherPair(Scalar(1.0), teacher=Scalar(-5.0), ema_alpha=0.0)
    pair.ema_update()
    assert float(pair.teacher.w) == 1.0


def test_ema_geometric_series():
    pair = StudentTeacherPair(Scalar(1.0), teacher=Scalar(0.0), ema_alpha=0.999)
    for _ in range(1000):
        pair.ema_update()
    assert float(pair.teacher.w) == pytest.approx(1 - 0.999**1000, abs=1e-9)
    assert float(pair.teacher.w) == pytest.approx(0.6323, abs=1e-4)


def test_ema_shape_mismatch():
    class Other(torch.nn.Module):
        def __init__(self):
            super().__init__()
            self.w = torch.nn.Parameter(torch.zeros(2, dtype=torch.float64))

    with pytest.raises(ValueError):
        StudentTeacherPair(Scalar(0.0), teacher=Other())


def test_ema_copies_buffers():
    pair = init_pair(BackboneConfig(base_channels=4, depth=2), seed=7)
    pair.student.train()
    pair.student(torch.rand(2, 1, 16, 16))  # updates BN running stats
    pair.ema_update()
    for (n, s), (_, t) in zip(pair.student.named_buffers(), pair.teacher.named_buffers()):
        assert torch.equal(s, t), n


def test_pair_state_dict_round_trip():
    a = init_pair(BackboneConfig(base_channels=4, depth=2), seed=8, ema_alpha=0.9)
    b = init_pair(BackboneConfig(base_channels=4, depth=2), seed=9)
    b.load_state_dict(a.state_dict())
    assert b.ema_alpha == 0.9
    for (k, v) in a.teacher.state_dict().items():
        assert torch.equal(v, b.teacher.state_dict()[k])


def test_no_nan_at_init_for_extreme_inputs():
    model = init_pair(BackboneConfig(base_channels=8), seed=10).student.eval()
    for x in (torch.zeros(1, 1, 32, 32), torch.ones(1, 1, 32, 32)):
        assert torch.isfinite(model(x)).all()
