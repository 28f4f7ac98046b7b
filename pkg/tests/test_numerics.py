"""
Tests for the dense volume container and numeric primitives.
"""

import numpy as np
import pytest
from scipy.ndimage import correlate

from vital_occ_stream.core.exceptions import ConfigurationError, ContractViolation
from vital_occ_stream.numerics.conv import conv3d, deconv3d_x2
from vital_occ_stream.numerics.functional import channel_pool, channel_standardize, sigmoid, softmax, spatial_pool
from vital_occ_stream.numerics.gradcheck import finite_difference_check
from vital_occ_stream.numerics.layers import Activation, Conv3dLayer, LinearLayer, apply_mlp_cells
from vital_occ_stream.numerics.sampling import Padding, resample_volume, trilinear_sample
from vital_occ_stream.numerics.volume import VoxelVolume, add_volumes, concat_channels
from vital_occ_stream.numerics.weights import WeightStore, manifest_path
from vital_occ_stream.utils.parallel import configure_threads, get_num_threads


# ---------------------------------------------------------------------------
# Volume
# ---------------------------------------------------------------------------

def test_volume_is_read_only(rng):
    vol = VoxelVolume(rng.standard_normal((2, 3, 3, 3)))
    with pytest.raises(ValueError):
        vol.data[0, 0, 0, 0] = 1.0


def test_volume_rejects_wrong_rank():
    with pytest.raises(ContractViolation):
        VoxelVolume(np.zeros((3, 3, 3)))


def test_cells_round_trip_is_x_major(rng):
    vol = VoxelVolume(rng.standard_normal((3, 4, 2, 5)).astype(np.float32))
    cells = vol.cells()
    assert cells.shape == (40, 3)
    assert np.array_equal(cells[1 * 10 + 1 * 5 + 2], vol.data[:, 1, 1, 2])
    assert np.array_equal(VoxelVolume.from_cells(cells, vol.dims).data, vol.data)


def test_add_and_concat_check_shapes():
    a = VoxelVolume.zeros(2, (2, 2, 2))
    b = VoxelVolume.zeros(2, (2, 2, 4))
    with pytest.raises(ContractViolation):
        add_volumes(a, b)
    with pytest.raises(ContractViolation):
        concat_channels([a, b])
    assert concat_channels([a, a]).channels == 4


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def test_sampling_at_cell_centers_is_exact(rng):
    vol = VoxelVolume(rng.standard_normal((2, 4, 3, 2)).astype(np.float32))
    points = np.array([[0.5, 0.5, 0.5], [3.5, 2.5, 1.5], [1.5, 0.5, 1.5]])
    out = trilinear_sample(vol, points)
    assert np.array_equal(out[0], vol.data[:, 0, 0, 0])
    assert np.array_equal(out[1], vol.data[:, 3, 2, 1])
    assert np.array_equal(out[2], vol.data[:, 1, 0, 1])


def test_sampling_reproduces_linear_ramp():
    i, j, k = np.meshgrid(np.arange(6.0), np.arange(5.0), np.arange(4.0), indexing="ij")
    vol = VoxelVolume((0.3 * i - 0.2 * j + 0.1 * k)[None].astype(np.float32))
    points = np.array([[1.75, 2.25, 1.1], [2.0, 3.0, 2.0]])
    expected = [0.3 * (p[0] - 0.5) - 0.2 * (p[1] - 0.5) + 0.1 * (p[2] - 0.5) for p in points]
    assert np.allclose(trilinear_sample(vol, points)[:, 0], expected, atol=1e-6)


def test_zero_padding_outside_is_zero():
    vol = VoxelVolume.full(1, (2, 2, 2), 3.0)
    out = trilinear_sample(vol, np.array([[-0.1, 1.0, 1.0], [1.0, 1.0, 2.5]]), Padding.ZEROS)
    assert np.array_equal(out, np.zeros((2, 1), dtype=np.float32))


def test_border_resample_preserves_constant():
    vol = VoxelVolume.full(2, (4, 4, 2), 1.5)
    out = resample_volume(vol, (8, 8, 4), Padding.BORDER)
    assert out.dims == (8, 8, 4)
    assert np.allclose(out.data, 1.5)


def test_sampling_rejects_bad_point_shape():
    with pytest.raises(ContractViolation):
        trilinear_sample(VoxelVolume.zeros(1, (2, 2, 2)), np.zeros((4, 2)))


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def test_conv3d_matches_scipy_correlate(rng):
    x = rng.standard_normal((6, 5, 4))
    kernel = rng.standard_normal((3, 3, 3))
    layer = Conv3dLayer(kernel[None, None], np.array([0.25]), stride=1, padding=1)
    out = conv3d(layer, VoxelVolume(x[None].astype(np.float32)))
    expected = correlate(x.astype(np.float32).astype(np.float64), kernel.astype(np.float32), mode="constant") + 0.25
    assert out.dims == (6, 5, 4)
    assert np.allclose(out.data[0], expected, atol=1e-5)


def test_conv3d_stride_two_halves_dims():
    layer = Conv3dLayer.zeros(4, 2, 3, stride=2, padding=1)
    assert conv3d(layer, VoxelVolume.zeros(2, (8, 6, 4))).dims == (4, 3, 2)


def test_conv3d_channel_mismatch():
    with pytest.raises(ContractViolation):
        conv3d(Conv3dLayer.zeros(1, 3, 1), VoxelVolume.zeros(2, (2, 2, 2)))


def test_deconv_with_unit_kernel_is_nearest_upsampling(rng):
    x = rng.standard_normal((1, 3, 2, 2)).astype(np.float32)
    layer = Conv3dLayer(np.ones((1, 1, 2, 2, 2)), np.zeros(1), stride=2, padding=0)
    out = deconv3d_x2(layer, VoxelVolume(x))
    expected = x[0].repeat(2, axis=0).repeat(2, axis=1).repeat(2, axis=2)
    assert out.dims == (6, 4, 4)
    assert np.array_equal(out.data[0], expected)


def test_deconv_is_linear(rng):
    layer = Conv3dLayer(rng.standard_normal((2, 3, 2, 2, 2)), np.zeros(2), stride=2, padding=0)
    a = rng.standard_normal((3, 4, 4, 4))
    b = rng.standard_normal((3, 4, 4, 4))
    combined = deconv3d_x2(layer, VoxelVolume(2.0 * a - 0.5 * b)).astype64()
    separate = 2.0 * deconv3d_x2(layer, VoxelVolume(a)).astype64() - 0.5 * deconv3d_x2(layer, VoxelVolume(b)).astype64()
    assert np.allclose(combined, separate, atol=1e-4)


def test_deconv_output_sum_is_input_sum_times_kernel_sum(rng):
    kernel = rng.standard_normal((2, 3, 2, 2, 2))
    layer = Conv3dLayer(kernel, np.zeros(2), stride=2, padding=0)
    x = rng.standard_normal((3, 4, 4, 4)).astype(np.float32)
    out = deconv3d_x2(layer, VoxelVolume(x)).astype64()
    # every input cell stamps the whole kernel
    expected = kernel.astype(np.float32).astype(np.float64).sum(axis=(2, 3, 4)) @ x.astype(np.float64).sum(axis=(1, 2, 3))
    assert np.allclose(out.sum(axis=(1, 2, 3)), expected, atol=1e-3)


def test_deconv_requires_stride_two():
    with pytest.raises(ContractViolation):
        deconv3d_x2(Conv3dLayer.zeros(1, 1, 2), VoxelVolume.zeros(1, (2, 2, 2)))


# ---------------------------------------------------------------------------
# Functional
# ---------------------------------------------------------------------------

def test_softmax_sums_to_one_and_survives_large_logits():
    s = softmax(np.array([[1000.0, 1000.0, -1000.0], [0.0, 1.0, 2.0]]))
    assert np.allclose(s.sum(axis=-1), 1.0)
    assert np.allclose(s[0], [0.5, 0.5, 0.0])


def test_softmax_temperature_divisor():
    v = np.array([0.0, 2.0])
    assert np.allclose(softmax(v, temperature_divisor=2.0), softmax(v / 2.0))
    with pytest.raises(ValueError):
        softmax(v, temperature_divisor=0.0)


def test_sigmoid_is_stable():
    out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.allclose(out, [0.0, 0.5, 1.0])


def test_pools(rng):
    vol = VoxelVolume(rng.standard_normal((3, 2, 2, 2)).astype(np.float32))
    assert np.allclose(channel_pool(vol, "max").data[0], vol.data.max(axis=0))
    assert np.allclose(channel_pool(vol, "avg").data[0], vol.data.mean(axis=0), atol=1e-6)
    assert np.allclose(spatial_pool(vol, "avg"), vol.astype64().reshape(3, -1).mean(axis=1))


def test_channel_standardize_identity_affine(rng):
    x = rng.standard_normal((5, 8)) * 4.0 + 2.0
    out = channel_standardize(x, np.ones(8), np.zeros(8))
    assert np.allclose(out.mean(axis=1), 0.0, atol=1e-9)
    assert np.allclose(out.std(axis=1), 1.0, atol=1e-3)


def test_finite_difference_check_detects_wrong_gradient():
    x = np.array([0.3, -0.7])
    good = finite_difference_check(lambda v: float(np.sum(v ** 2)), lambda v: 2.0 * v, x)
    bad = finite_difference_check(lambda v: float(np.sum(v ** 2)), lambda v: v, x)
    assert good < 1e-6
    assert bad > 0.1


def test_finite_inputs_give_finite_outputs(rng):
    def case(i):
        scale = 10.0 ** rng.uniform(-3.0, 3.0)
        vol = VoxelVolume((rng.standard_normal((3, 4, 4, 4)) * scale).astype(np.float32))
        op = i % 8
        if op == 0:
            return softmax(vol.astype64(), temperature_divisor=rng.uniform(0.1, 10.0), axis=0)
        if op == 1:
            return sigmoid(vol.astype64())
        if op == 2:
            return channel_standardize(vol.cells(), rng.uniform(0.5, 2.0, 3), rng.standard_normal(3))
        if op == 3:
            return np.concatenate([channel_pool(vol, "max").data.ravel(), spatial_pool(vol, "avg")])
        if op == 4:
            points = rng.uniform(-2.0, 6.0, size=(16, 3))
            return trilinear_sample(vol, points, (Padding.ZEROS, Padding.BORDER)[(i // 8) % 2])
        if op == 5:
            return resample_volume(vol, (2, 6, 8)).data
        if op == 6:
            layer = Conv3dLayer(rng.uniform(-1.0, 1.0, (2, 3, 3, 3, 3)), rng.standard_normal(2), stride=1, padding=1)
            return conv3d(layer, vol).data
        layer = Conv3dLayer(rng.uniform(-1.0, 1.0, (2, 3, 2, 2, 2)), rng.standard_normal(2), stride=2, padding=0)
        return deconv3d_x2(layer, vol).data

    for i in range(1000):
        assert np.all(np.isfinite(case(i))), f"case {i} produced a non-finite value"


# ---------------------------------------------------------------------------
# Layers and weights
# ---------------------------------------------------------------------------

def test_linear_layer_activations():
    layer = LinearLayer(np.array([[1.0, -1.0]]), np.array([0.0]), Activation.RELU)
    assert layer.apply(np.array([[1.0, 3.0], [3.0, 1.0]])).tolist() == [[0.0], [2.0]]
    with pytest.raises(ContractViolation):
        layer.apply(np.zeros(3))


def test_mlp_cells_independent_of_thread_count(rng):
    store = WeightStore()
    layers = [store.linear("mlp.0", 4, 8, Activation.RELU, seed=1), store.linear("mlp.1", 8, 2, seed=1)]
    cells = rng.standard_normal((70000, 4)).astype(np.float32)
    previous = get_num_threads()
    try:
        configure_threads(1)
        single = apply_mlp_cells(layers, cells)
        configure_threads(4)
        multi = apply_mlp_cells(layers, cells)
    finally:
        configure_threads(previous)
    assert np.array_equal(single, multi)


def test_seeded_weights_are_deterministic():
    a = WeightStore().conv("block", 2, 3, 3, seed=5)
    b = WeightStore().conv("block", 2, 3, 3, seed=5)
    c = WeightStore().conv("block", 2, 3, 3, seed=6)
    assert np.array_equal(a.kernel, b.kernel)
    assert not np.array_equal(a.kernel, c.kernel)


def test_missing_block_without_seed_is_configuration_error():
    with pytest.raises(ConfigurationError) as exc:
        WeightStore().linear("absent", 2, 2)
    assert exc.value.exit_code == 2


def test_weight_file_round_trip(tmp_path):
    store = WeightStore()
    store.linear("a", 3, 2, seed=1)
    store.norm("b", 4, seed=1)
    stem = tmp_path / "weights"
    store.save(stem)
    assert manifest_path(stem).is_file()
    assert (tmp_path / "weights.bin").stat().st_size == 4 * store.total_parameters()

    loaded = WeightStore.load(stem)
    assert loaded.keys() == store.keys()
    for name, role in store:
        assert np.array_equal(loaded.get(name, role), store.get(name, role))


def test_truncated_blob_is_rejected(tmp_path):
    store = WeightStore()
    store.linear("a", 3, 2, seed=1)
    store.save(tmp_path / "w")
    blob = tmp_path / "w.bin"
    blob.write_bytes(blob.read_bytes()[:-4])
    with pytest.raises(ConfigurationError):
        WeightStore.load(tmp_path / "w")
