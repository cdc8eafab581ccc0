import numpy as np
import pytest
import torch.nn.functional as F
import torch
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mpqplan.quantizer import (
    BnFoldInput, QuantizedTensor, QuantSpec, clip_ranges, dequantize, fake_quant, fold_bn, perturbation_norm,
    quantize,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
tensors = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 12)), elements=finite)
specs = st.builds(
    QuantSpec,
    bits=st.sampled_from([2, 3, 4, 8]),
    granularity=st.sampled_from(["per_tensor", "per_channel"]),
    scheme=st.sampled_from(["symmetric", "asymmetric"]),
    clip_method=st.sampled_from(["minmax", "mse"]),
)


def test_unit_range_example():
    q = quantize(np.array([-1.0, 0.0, 1.0]), QuantSpec(8))
    assert q.scale[0] == 1 / 127
    assert q.codes.tolist() == [-127, 0, 127]
    assert dequantize(q).tolist() == [-1.0, 0.0, 1.0]
    assert perturbation_norm([-1.0, 0.0, 1.0], QuantSpec(8)) == 0.0


def test_dequantize_formula():
    q = QuantizedTensor(np.array([-127, 0, 127]), np.array([1 / 127]), np.array([0]), QuantSpec(8), (3,))
    np.testing.assert_allclose(dequantize(q), [-1, 0, 1], rtol=0, atol=1e-15)
    q = QuantizedTensor(np.array([0, 3, 15]), np.array([0.5]), np.array([3]), QuantSpec(4, scheme="asymmetric"), (3,))
    assert dequantize(q).tolist() == [-1.5, 0.0, 6.0]


@pytest.mark.parametrize("scheme", ["symmetric", "asymmetric"])
def test_all_zero_tensor(scheme):
    q = quantize(np.zeros(3), QuantSpec(4, scheme=scheme))
    assert q.scale[0] == 1.0
    assert np.all(dequantize(q) == 0)


def test_on_grid_values_are_fixed_points():
    spec = QuantSpec(4)
    grid = np.arange(-7, 8) * 0.25
    np.testing.assert_array_equal(fake_quant(grid, spec), grid)
    assert perturbation_norm(grid, spec) == 0.0


@given(tensors, specs)
def test_codes_in_range_and_scales_positive(w, spec):
    q = quantize(w, spec)
    assert q.codes.min() >= spec.qmin and q.codes.max() <= spec.qmax
    assert np.all(q.scale > 0)
    lo = -(2 ** (spec.bits - 1)) if spec.scheme == "symmetric" else 0
    hi = 2 ** (spec.bits - 1) - 1 if spec.scheme == "symmetric" else 2**spec.bits - 1
    assert q.codes.min() >= lo and q.codes.max() <= hi


@given(tensors, specs)
def test_idempotent(w, spec):
    once = fake_quant(w, spec)
    np.testing.assert_array_equal(fake_quant(once, spec), once)


@given(tensors, st.sampled_from([2, 3, 4, 8]), st.sampled_from(["per_tensor", "per_channel"]),
       st.sampled_from(["symmetric", "asymmetric"]))
def test_rounding_bound_inside_clip_range(w, bits, gran, scheme):
    spec = QuantSpec(bits, gran, scheme, "minmax")
    q = quantize(w, spec)
    err = np.abs(dequantize(q) - w).reshape(len(q.scale), -1)
    assert np.all(err <= q.scale[:, None] / 2 * (1 + 1e-9) + 1e-300)


def _oracle_mse_clip(row, qmax):
    """Plain grid scan: clip = f*max|w| for 100 factors, scale = clip/qmax."""
    amax = np.max(np.abs(row))
    best = None
    for f in np.linspace(0.1, 1.0, 100):
        clip = f * amax
        s = clip / qmax
        err = np.sum((np.clip(np.rint(row / s), -qmax, qmax) * s - row) ** 2)
        if best is None or err <= best[0]:
            best = (err, clip)
    return best


@pytest.mark.parametrize("seed", range(10))
def test_mse_clip_matches_grid_scan(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_t(3, size=64)
    spec = QuantSpec(4, clip_method="mse")
    (_, hi), = clip_ranges(w, spec)
    err_star, clip_star = _oracle_mse_clip(w, spec.qmax)
    if hi != pytest.approx(clip_star, rel=1e-12):
        s = hi / spec.qmax
        ours = np.sum((np.clip(np.rint(w / s), -7, 7) * s - w) ** 2)
        assert ours == pytest.approx(err_star, rel=1e-9)


def test_percentile_clip():
    w = np.concatenate([np.linspace(-1, 1, 999), [50.0]])
    (lo, hi), = clip_ranges(w, QuantSpec(8, clip_method="percentile", percentile=99.0))
    assert hi == pytest.approx(np.percentile(np.abs(w), 99.0)) and lo == -hi
    assert hi < 2


def test_per_channel_uses_leading_axis():
    w = np.stack([np.linspace(-1, 1, 9), np.linspace(-10, 10, 9)])
    q = quantize(w, QuantSpec(8, "per_channel"))
    assert q.scale.shape == (2,) and q.scale[1] == pytest.approx(10 * q.scale[0])


@pytest.mark.parametrize("seed", range(5))
def test_perturbation_matches_recomputation_and_monotone(seed):
    w = np.random.default_rng(seed).normal(size=(8, 9))
    vals = []
    for b in (2, 4, 8):
        spec = QuantSpec(b)
        assert perturbation_norm(w, spec) == pytest.approx(np.sum((fake_quant(w, spec) - w) ** 2), rel=1e-15)
        vals.append(perturbation_norm(w, spec))
    assert vals[0] >= vals[1] >= vals[2]


def test_spec_validation():
    with pytest.raises(ValueError):
        QuantSpec(5)
    with pytest.raises(ValueError):
        QuantSpec(8, clip_method="percentile", percentile=40)
    with pytest.raises(ValueError):
        QuantSpec(8, granularity="per_row")
    spec = QuantSpec(4, "per_channel", "asymmetric", "percentile", 99.0)
    assert QuantSpec.from_dict(spec.to_dict()) == spec


def test_empty_tensor_rejected():
    with pytest.raises(ValueError):
        quantize(np.zeros(0), QuantSpec())


class TestFoldBn:
    def test_identity_bn(self, rng):
        w, b = rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
        one, zero = np.ones(4), np.zeros(4)
        w2, b2 = fold_bn(BnFoldInput(w, b, zero, one, one, zero, eps=0.0))
        np.testing.assert_array_equal(w2, w)
        np.testing.assert_array_equal(b2, b)

    def test_gamma_two(self, rng):
        w, b = rng.normal(size=(4, 2)), np.zeros(4)
        one, zero = np.ones(4), np.zeros(4)
        w2, _ = fold_bn(BnFoldInput(w, b, zero, one, 2 * one, zero, eps=0.0))
        np.testing.assert_array_equal(w2, 2 * w)

    def test_conv_bn_equivalence(self, rng):
        w, b = rng.normal(size=(5, 3, 3, 3)), rng.normal(size=5)
        mean, var = rng.normal(size=5), rng.uniform(0.1, 2, 5)
        gamma, beta = rng.normal(size=5), rng.normal(size=5)
        x = torch.from_numpy(rng.normal(size=(16, 3, 7, 7)))
        ref = F.conv2d(x, torch.from_numpy(w), torch.from_numpy(b), padding=1)
        ref = F.batch_norm(ref, torch.from_numpy(mean), torch.from_numpy(var), torch.from_numpy(gamma),
                           torch.from_numpy(beta), training=False, eps=1e-5)
        w2, b2 = fold_bn(BnFoldInput(w, b, mean, var, gamma, beta, 1e-5))
        out = F.conv2d(x, torch.from_numpy(w2), torch.from_numpy(b2), padding=1)
        assert float((out - ref).abs().max()) < 1e-5

    def test_non_positive_variance(self):
        z = np.zeros(2)
        with pytest.raises(ValueError):
            fold_bn(BnFoldInput(np.ones((2, 2)), z, z, np.array([-1.0, 1.0]), np.ones(2), z, 0.5))

    def test_shape_mismatch(self):
        z = np.zeros(2)
        with pytest.raises(ValueError):
            fold_bn(BnFoldInput(np.ones((3, 2)), z, z, np.ones(2), np.ones(2), z))
