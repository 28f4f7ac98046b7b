"""
Tests for decoding, IoU/mIoU, RayIoU, losses, grid dumps and aggregation.
"""

import math
import warnings

import numpy as np
import pytest

from vital_occ_stream.core.config import RaySetConfig
from vital_occ_stream.core.exceptions import ContractViolation, InputError
from vital_occ_stream.core.models import NUM_SEMANTIC_CLASSES, class_id
from vital_occ_stream.decoder.aggregate import MetricAggregator, score_grids
from vital_occ_stream.decoder.decode import decode, labels_from_logits
from vital_occ_stream.decoder.grid_io import read_grid, write_grid
from vital_occ_stream.decoder.losses import LOSS_WEIGHTS, binary_cross_entropy, losses, mean_losses
from vital_occ_stream.decoder.metrics import ConfusionAccumulator, confusion_matrix, iou_miou
from vital_occ_stream.decoder.models import DecoderParams, LossReport, SemanticGrid
from vital_occ_stream.decoder.rayiou import first_hits, ray_directions, rayiou
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.numerics.layers import Activation, Conv3dLayer, LinearLayer
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.numerics.weights import WeightStore
from vital_occ_stream.testing.oracles import brute_confusion, brute_miou, march_first_hit

CAR = class_id("car")
PEDESTRIAN = class_id("pedestrian")
ROAD = class_id("driveable_surface")
MANMADE = class_id("manmade")

RING_SPEC = GridSpec(dims=(20, 20, 4), min_corner=(-5.0, -5.0, -1.0), resolution=0.5)
AXIS_RAYS = RaySetConfig(
    azimuth_count=4,
    elevation_count=1,
    elevation_min_deg=0.0,
    elevation_max_deg=0.0,
    origin=(0.0, 0.0, 0.5),
)


def _ring(index_low: int, index_high: int) -> SemanticGrid:
    labels = np.zeros(RING_SPEC.dims, dtype=np.uint8)
    labels[index_low, :, :] = MANMADE
    labels[index_high, :, :] = MANMADE
    labels[:, index_low, :] = MANMADE
    labels[:, index_high, :] = MANMADE
    return SemanticGrid(labels)


# ---------------------------------------------------------------------------
# Semantic grid
# ---------------------------------------------------------------------------

def test_semantic_grid_rejects_out_of_range_labels():
    with pytest.raises(ContractViolation):
        SemanticGrid(np.full((2, 2, 2), NUM_SEMANTIC_CLASSES + 1, dtype=np.uint8))


def test_semantic_grid_rejects_mismatched_mask():
    with pytest.raises(ContractViolation):
        SemanticGrid(np.zeros((2, 2, 2), dtype=np.uint8), mask=np.ones((2, 2, 1), dtype=bool))


# ---------------------------------------------------------------------------
# IoU / mIoU
# ---------------------------------------------------------------------------

def test_confusion_matches_per_cell_count(rng):
    """Vectorised confusion equals the per-cell loop, with and without a mask."""
    for _ in range(5):
        gt_labels = rng.integers(0, NUM_SEMANTIC_CLASSES + 1, size=(6, 5, 4))
        pred_labels = rng.integers(0, NUM_SEMANTIC_CLASSES + 1, size=(6, 5, 4))
        mask = rng.random((6, 5, 4)) < 0.6
        gt = SemanticGrid(gt_labels, mask=mask)
        pred = SemanticGrid(pred_labels)
        assert np.array_equal(confusion_matrix(pred, gt), brute_confusion(pred, gt))
        assert np.array_equal(confusion_matrix(pred, gt, use_mask=True), brute_confusion(pred, gt, mask))


def test_miou_matches_brute_force(rng):
    gt = SemanticGrid(rng.integers(0, 6, size=(8, 8, 4)))
    pred = SemanticGrid(rng.integers(0, 6, size=(8, 8, 4)))
    result = iou_miou(pred, gt)
    assert result.miou == pytest.approx(brute_miou(brute_confusion(pred, gt)))


def test_identical_grids_score_one(rng):
    labels = rng.integers(0, NUM_SEMANTIC_CLASSES + 1, size=(6, 6, 3))
    result = iou_miou(SemanticGrid(labels), SemanticGrid(labels))
    assert result.miou == pytest.approx(1.0)
    assert result.geometry_iou == pytest.approx(1.0)


def test_undefined_classes_are_left_out():
    """Classes absent from both grids do not drag the mean down."""
    labels = np.zeros((4, 4, 2), dtype=np.uint8)
    labels[0, 0, 0] = CAR
    result = iou_miou(SemanticGrid(labels), SemanticGrid(labels))
    per_class = result.per_class_dict()
    assert per_class["car"] == pytest.approx(1.0)
    assert per_class["pedestrian"] is None
    assert result.miou == pytest.approx(1.0)


def test_all_empty_grids_have_no_score():
    empty = SemanticGrid.empty((3, 3, 3))
    result = iou_miou(empty, empty)
    assert result.miou is None
    assert result.geometry_iou is None


def test_geometry_iou_ignores_class():
    gt = np.zeros((4, 4, 2), dtype=np.uint8)
    pred = np.zeros((4, 4, 2), dtype=np.uint8)
    gt[0, :, 0] = CAR
    pred[0, :, 0] = PEDESTRIAN
    pred[1, 0, 0] = CAR
    result = iou_miou(SemanticGrid(pred), SemanticGrid(gt))
    assert result.geometry_iou == pytest.approx(4 / 5)
    assert result.miou == pytest.approx(0.0)


def test_dynamic_static_split():
    gt = np.zeros((4, 4, 2), dtype=np.uint8)
    gt[0, :, 0] = CAR
    gt[2:, :, 0] = ROAD
    pred = gt.copy()
    pred[3, :, 0] = 0
    result = iou_miou(SemanticGrid(pred), SemanticGrid(gt))
    assert result.miou_dynamic == pytest.approx(1.0)
    assert result.miou_static == pytest.approx(0.5)
    assert result.miou == pytest.approx(0.75)


def test_mask_excludes_invisible_cells():
    gt_labels = np.zeros((4, 4, 2), dtype=np.uint8)
    gt_labels[0, 0, :] = CAR
    pred_labels = gt_labels.copy()
    pred_labels[3, 3, 1] = CAR
    mask = np.ones((4, 4, 2), dtype=bool)
    mask[3, 3, 1] = False
    gt = SemanticGrid(gt_labels, mask=mask)
    assert iou_miou(SemanticGrid(pred_labels), gt, use_mask=True).miou == pytest.approx(1.0)
    assert iou_miou(SemanticGrid(pred_labels), gt, use_mask=False).miou == pytest.approx(2 / 3)


def test_confusion_dims_mismatch():
    with pytest.raises(ContractViolation):
        confusion_matrix(SemanticGrid.empty((2, 2, 2)), SemanticGrid.empty((2, 2, 3)))


def test_confusion_accumulator_sums_counts():
    acc = ConfusionAccumulator()
    assert acc.result() is None
    labels = np.zeros((2, 2, 2), dtype=np.uint8)
    labels[0, 0, 0] = CAR
    acc.add(SemanticGrid(labels), SemanticGrid(labels))
    acc.add(SemanticGrid.empty((2, 2, 2)), SemanticGrid(labels))
    assert acc.frames == 2
    assert acc.result().per_class_dict()["car"] == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# RayIoU
# ---------------------------------------------------------------------------

def test_ray_directions_are_unit_and_elevation_major():
    ray_set = RaySetConfig(azimuth_count=6, elevation_count=3, elevation_min_deg=-20.0, elevation_max_deg=10.0)
    dirs = ray_directions(ray_set)
    assert dirs.shape == (18, 3)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
    assert np.allclose(dirs[:6, 2], math.sin(math.radians(-20.0)))
    assert np.allclose(dirs[12:, 2], math.sin(math.radians(10.0)))


def test_first_hits_match_marcher(rng):
    occupancy = rng.random((10, 10, 6)) < 0.1
    grid = SemanticGrid(occupancy.astype(np.uint8))
    origin = np.array([5.3, 4.7, 2.2])
    dirs = rng.standard_normal((300, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    hits = first_hits(grid, origin, dirs)
    compared = 0
    for i, d in enumerate(dirs):
        if hits.flat[i] >= 0 and hits.t_exit[i] - hits.t_entry[i] < 0.02:
            continue
        assert hits.flat[i] == march_first_hit(occupancy, origin, d)
        compared += 1
    assert compared > 200


def test_first_hits_origin_outside_grid():
    with pytest.raises(ContractViolation):
        first_hits(SemanticGrid.empty((4, 4, 4)), [4.5, 1.0, 1.0], [[1.0, 0.0, 0.0]])


def test_rayiou_identical_grids():
    ring = _ring(0, 19)
    result = rayiou(ring, ring, RING_SPEC, AXIS_RAYS.origin, AXIS_RAYS)
    assert result == {"1": 1.0, "2": 1.0, "4": 1.0, "mean": 1.0}


def test_rayiou_depth_tolerance():
    """A wall 1.5 m short fails the 1 m tolerance and passes 2 m and 4 m."""
    gt = _ring(0, 19)
    pred = _ring(3, 16)
    result = rayiou(pred, gt, RING_SPEC, AXIS_RAYS.origin, AXIS_RAYS)
    assert result["1"] == pytest.approx(0.0)
    assert result["2"] == pytest.approx(1.0)
    assert result["4"] == pytest.approx(1.0)
    assert result["mean"] == pytest.approx(2 / 3)


def test_rayiou_undefined_without_hits():
    empty = SemanticGrid.empty(RING_SPEC.dims)
    result = rayiou(empty, empty, RING_SPEC, AXIS_RAYS.origin, AXIS_RAYS)
    assert result["1"] is None
    assert result["mean"] is None


SLANT_SPEC = GridSpec(dims=(12, 1, 12), min_corner=(0.0, 0.0, 0.0), resolution=0.4)
# cos(elevation) = 2/3, so a one-cell shift of an x slab moves the hit 1.5 cells along the ray
SLANT_RAY = RaySetConfig(
    azimuth_count=1,
    elevation_count=1,
    elevation_min_deg=math.degrees(math.acos(2.0 / 3.0)),
    elevation_max_deg=90.0,
    origin=(0.2, 0.2, 0.2),
)


def _slab(x: int) -> SemanticGrid:
    labels = np.zeros(SLANT_SPEC.dims, dtype=np.uint8)
    labels[x, :, :] = CAR
    return SemanticGrid(labels)


def test_rayiou_hit_displaced_one_and_a_half_cells():
    result = rayiou(_slab(4), _slab(3), SLANT_SPEC, SLANT_RAY.origin, SLANT_RAY)
    assert result == {"1": 1.0, "2": 1.0, "4": 1.0, "mean": 1.0}


def test_rayiou_hit_displaced_three_metres():
    result = rayiou(_slab(8), _slab(3), SLANT_SPEC, SLANT_RAY.origin, SLANT_RAY)
    assert result["1"] == pytest.approx(0.0)
    assert result["2"] == pytest.approx(0.0)
    assert result["4"] == pytest.approx(1.0)
    assert result["mean"] == pytest.approx(1 / 3)


def test_rays_missing_both_grids_raise_no_warning():
    empty = SemanticGrid.empty(RING_SPEC.dims)
    half = _ring(0, 19).labels.copy()
    half[:10] = 0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rayiou(empty, empty, RING_SPEC, AXIS_RAYS.origin, AXIS_RAYS)
        result = rayiou(SemanticGrid(half), SemanticGrid(half), RING_SPEC, AXIS_RAYS.origin, AXIS_RAYS)
    assert result["mean"] == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def test_uniform_logits_cross_entropy(rng):
    dims = (3, 3, 2)
    gt = SemanticGrid(rng.integers(0, NUM_SEMANTIC_CLASSES + 1, size=dims))
    report = losses(VoxelVolume.zeros(NUM_SEMANTIC_CLASSES + 1, dims), None, None, gt)
    assert report.occ == pytest.approx(math.log(NUM_SEMANTIC_CLASSES + 1), abs=1e-6)
    assert report.fore is None and report.bin is None
    assert report.depth is None and report.det is None and report.mask is None
    assert report.total == pytest.approx(LOSS_WEIGHTS["occ"] * report.occ)


def test_total_uses_loss_weights(rng):
    dims = (3, 3, 2)
    gt = SemanticGrid(rng.integers(0, NUM_SEMANTIC_CLASSES + 1, size=dims))
    logits = VoxelVolume(rng.standard_normal((NUM_SEMANTIC_CLASSES + 1, *dims)))
    forecast = VoxelVolume(rng.standard_normal((NUM_SEMANTIC_CLASSES + 1, *dims)))
    binary = VoxelVolume(rng.standard_normal((1, *dims)))
    report = losses(logits, forecast, binary, gt)
    assert report.total == pytest.approx(10.0 * report.occ + 10.0 * report.fore + 10.0 * report.bin)
    assert report.weights["depth"] == pytest.approx(0.05)
    assert report.weights["det"] == pytest.approx(0.2)


def test_binary_cross_entropy_zero_logit():
    target = np.zeros((2, 2, 2), dtype=bool)
    target[0] = True
    assert binary_cross_entropy(VoxelVolume.zeros(1, (2, 2, 2)), target) == pytest.approx(math.log(2.0))


def test_cross_entropy_channel_mismatch():
    gt = SemanticGrid.empty((2, 2, 2))
    with pytest.raises(ContractViolation):
        losses(VoxelVolume.zeros(5, (2, 2, 2)), None, None, gt)


def test_mean_losses_averages_reported_terms():
    a = LossReport(occ=1.0, fore=None, bin=None, total=10.0)
    b = LossReport(occ=3.0, fore=4.0, bin=None, total=70.0)
    c = LossReport(occ=2.0, fore=2.0, bin=None, total=77.5)
    mean = mean_losses([a, b, c])
    assert mean.occ == pytest.approx(2.0)
    assert mean.fore == pytest.approx(3.0)
    assert mean.bin is None
    assert mean.total == pytest.approx(52.5)
    assert mean_losses([]) is None


# ---------------------------------------------------------------------------
# Decoder
# ---------------------------------------------------------------------------

def test_decode_doubles_dims():
    params = DecoderParams.from_store(WeightStore(), "decoder", 4, 3, 5, seed=0)
    volume = VoxelVolume(np.random.default_rng(0).standard_normal((4, 2, 3, 1)))
    logits, labels = decode(volume, params)
    assert logits.dims == (4, 6, 2)
    assert logits.channels == NUM_SEMANTIC_CLASSES + 1
    assert labels.dims == (4, 6, 2)
    assert np.array_equal(labels.labels, np.argmax(logits.data, axis=0))


def test_decode_rejects_wrong_out_dims():
    params = DecoderParams.from_store(WeightStore(), "decoder", 4, 3, 5, seed=0)
    with pytest.raises(ContractViolation):
        decode(VoxelVolume.zeros(4, (2, 2, 2)), params, out_dims=(4, 4, 5))


def test_argmax_ties_go_to_lowest_id():
    data = np.zeros((NUM_SEMANTIC_CLASSES + 1, 1, 1, 2), dtype=np.float32)
    data[CAR, 0, 0, 1] = 1.0
    data[PEDESTRIAN, 0, 0, 1] = 1.0
    labels = labels_from_logits(VoxelVolume(data))
    assert labels.labels[0, 0, 0] == 0
    assert labels.labels[0, 0, 1] == CAR


# ---------------------------------------------------------------------------
# Grid dumps
# ---------------------------------------------------------------------------

def test_grid_dump_round_trip(tmp_path, rng):
    spec = GridSpec(dims=(5, 4, 3), min_corner=(-1.0, -0.8, -0.4), resolution=0.4)
    grid = SemanticGrid(rng.integers(0, NUM_SEMANTIC_CLASSES + 1, size=spec.dims), mask=rng.random(spec.dims) < 0.5)
    path = write_grid(tmp_path / "pred" / "frame_0000.grid", grid, spec)
    loaded, loaded_spec = read_grid(path)
    assert loaded.equals(grid)
    assert loaded_spec == spec


def test_grid_dump_header_is_ascii_line(tmp_path, unit_spec):
    path = write_grid(tmp_path / "g.grid", SemanticGrid.empty(unit_spec.dims), unit_spec)
    header = path.read_bytes().split(b"\n", 1)[0].decode("ascii")
    assert header.startswith("OCCGRID v1 dims 8 6 4 ")
    assert header.endswith("mask 0")


def test_grid_dump_malformed_header(tmp_path):
    path = tmp_path / "bad.grid"
    path.write_bytes(b"NOTAGRID v1\n\x00\x00")
    with pytest.raises(InputError) as exc:
        read_grid(path)
    assert exc.value.exit_code == 1


def test_grid_dump_truncated_body(tmp_path, unit_spec):
    path = write_grid(tmp_path / "g.grid", SemanticGrid.empty(unit_spec.dims), unit_spec)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(InputError):
        read_grid(path)


def test_grid_dump_missing_file(tmp_path):
    with pytest.raises(InputError):
        read_grid(tmp_path / "missing.grid")


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def test_aggregate_sums_counts_over_frames():
    """Sequence IoU is computed from summed counts, not averaged frame scores."""
    spec = GridSpec(dims=(4, 4, 2), min_corner=(0.0, 0.0, 0.0), resolution=1.0)
    first = np.zeros(spec.dims, dtype=np.uint8)
    first[0, :, 0] = CAR
    second = np.zeros(spec.dims, dtype=np.uint8)
    second[:3, :, 0] = CAR

    report = score_grids(
        [
            (0, SemanticGrid(first), SemanticGrid(first), spec),
            (1, SemanticGrid.empty(spec.dims), SemanticGrid(second), spec),
        ]
    )
    assert report.frame_count == 2
    assert report.per_class_iou["car"] == pytest.approx(0.25)
    assert report.per_class_iou["pedestrian"] is None
    assert report.miou == pytest.approx(0.25)
    assert report.miou_dynamic == pytest.approx(0.25)
    assert report.miou_static is None
    assert report.geometry_iou == pytest.approx(0.25)
    assert [row.miou for row in report.frames] == [pytest.approx(1.0), pytest.approx(0.0)]
    assert report.rayiou is None


def test_aggregate_rayiou_and_timings():
    ring = _ring(0, 19)
    aggregator = MetricAggregator(ray_set=AXIS_RAYS)
    aggregator.add_frame(0, ring, ring, RING_SPEC, timings_ms={"decode": 2.0})
    aggregator.add_frame(1, ring, ring, RING_SPEC, timings_ms={"decode": 4.0})
    report = aggregator.report()
    assert report.rayiou.mean == pytest.approx(1.0)
    assert report.rayiou.rays == 4
    assert set(report.rayiou.thresholds) == {"1", "2", "4"}
    assert report.timings_ms == {"decode": pytest.approx(3.0)}
    assert report.frames[0].rayiou == pytest.approx(1.0)


def test_empty_aggregator_report():
    report = MetricAggregator().report()
    assert report.frame_count == 0
    assert report.miou is None


def test_zero_decoder_labels_everything_empty(rng):
    params = DecoderParams(
        Conv3dLayer.zeros(3, 4, 2, stride=2),
        (LinearLayer.zeros(5, 3, Activation.RELU), LinearLayer.zeros(NUM_SEMANTIC_CLASSES + 1, 5)),
    )
    logits, labels = decode(VoxelVolume(rng.standard_normal((4, 2, 3, 2))), params)
    assert not np.any(logits.data)
    assert not np.any(labels.labels)
