import math

import numpy as np
import pytest
import torch

from semicurv.posenc import PositionalEncoding, attach, encode

SIN = PositionalEncoding("sinusoid", 4)


def sign_changes(row, tol=1e-12):
    signs = [np.sign(v) for v in row if abs(v) > tol]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


@pytest.mark.parametrize("k", [1, 2, 4, 8])
def test_origin_values(k):
    enc = encode(5, 7, PositionalEncoding("sinusoid", k))
    assert enc[0, 0, 0] == 0.0
    assert enc[1, 0, 0] == 1.0


def test_midpoint_periodicity():
    enc = encode(3, 3, SIN)  # S_x = 0, 0.5, 1
    assert abs(float(enc[0, 0, 1])) < 1e-12


def test_row_values_width_nine():
    enc = encode(4, 9, SIN)
    expected = np.sin(4 * np.pi * np.arange(9) / 8)
    np.testing.assert_allclose(enc[0, 2].numpy(), expected, atol=1e-12)
    # channel 1 varies along the height only
    np.testing.assert_allclose(enc[1, :, 0].numpy(), np.cos(4 * np.pi * np.arange(4) / 3), atol=1e-12)
    assert torch.all(enc[1] == enc[1, :, :1])


def test_linear_kind_spans_unit_interval():
    enc = encode(5, 6, PositionalEncoding("linear"))
    assert enc[0, 0, 0] == 0 and enc[0, 0, -1] == 1
    assert enc[1, 0, 0] == 0 and enc[1, -1, 0] == 1
    assert enc.min() >= 0 and enc.max() <= 1


def test_bounded():
    enc = encode(33, 17, PositionalEncoding("sinusoid", 3.3))
    assert enc.abs().max() <= 1.0


def test_degenerate_extent():
    enc = encode(1, 1, SIN)
    assert enc[0, 0, 0] == 0.0 and enc[1, 0, 0] == 1.0


def test_not_constant_along_axes():
    for k in (1, 2, 4, 8):
        enc = encode(16, 16, PositionalEncoding("sinusoid", k))
        assert enc[0, 0].std() > 0
        assert enc[1, :, 0].std() > 0


@pytest.mark.parametrize("k", [1, 2, 4, 8])
def test_period_control(k):
    enc = encode(64, 64, PositionalEncoding("sinusoid", k))
    # sin(k pi s) on [0, 1] crosses zero at s = j/k, j = 1..k-1
    assert sign_changes(enc[0, 0].numpy()) == k - 1
    # cos(k pi s) crosses zero at s = (j + 1/2)/k, j = 0..k-1
    assert sign_changes(enc[1, :, 0].numpy()) == k
    # full periods along a row
    assert math.ceil(k / 2) == math.ceil((sign_changes(enc[0, 0].numpy()) + 1) / 2)


def test_attach_none_is_identity():
    f = torch.rand(2, 8, 5, 5)
    assert attach(f, PositionalEncoding("none")) is f


def test_attach_appends_two_channels():
    f = torch.rand(3, 8, 6, 10)
    out = attach(f, SIN)
    assert out.shape == (3, 10, 6, 10)
    assert torch.equal(out[:, :8], f)
    torch.testing.assert_close(out[1, 8:], encode(6, 10, SIN).float())
    single = attach(f[0], SIN)
    assert single.shape == (10, 6, 10)


def test_attach_resolution_covariant_corners():
    a = attach(torch.zeros(1, 1, 32, 32, dtype=torch.float64), SIN)
    b = attach(torch.zeros(1, 1, 8, 8, dtype=torch.float64), SIN)
    for yy, xx in [(0, 0), (0, -1), (-1, 0), (-1, -1)]:
        torch.testing.assert_close(a[0, 1:, yy, xx], b[0, 1:, yy, xx], atol=1e-12, rtol=0)


def test_encode_is_deterministic_and_not_aliased():
    a = encode(8, 8, SIN)
    a.zero_()
    b = encode(8, 8, SIN)
    assert b[1, 0, 0] == 1.0


def test_invalid_config():
    with pytest.raises(ValueError):
        PositionalEncoding("rotary")
    with pytest.raises(ValueError):
        PositionalEncoding("sinusoid", 0)
