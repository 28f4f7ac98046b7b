"""
Tests for query-guided aggregation: detector sources, V2Q attention, query
selection, the voxel/query index and dynamic query aggregation.
"""

from dataclasses import replace

import numpy as np
import pytest

from vital_occ_stream.core.config import DetectorConfig, DetectorMode, SelectionConfig, SelectionMode
from vital_occ_stream.core.exceptions import ConfigurationError, ContractViolation, InputError
from vital_occ_stream.core.models import class_id
from vital_occ_stream.decoder.models import SemanticGrid
from vital_occ_stream.geometry.boxes import Box3D
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.geometry.transforms import EgoPose, RigidTransform
from vital_occ_stream.numerics.layers import Activation, LinearLayer
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.numerics.weights import WeightStore
from vital_occ_stream.query.detector import ReplayDetections, cap_queries, detector_source
from vital_occ_stream.query.dqa import dqa, dqa_trace, ffn_residual
from vital_occ_stream.query.index import build_voxel_query_index
from vital_occ_stream.query.models import DeformAttnParams, DetectorParams, DqaParams, InstanceQuery
from vital_occ_stream.query.selection import match_queries, select_queries, small_object_score
from vital_occ_stream.query.v2q import deform_attention_weights, v2q_deform_attn
from vital_occ_stream.scene.models import DynamicBox, SceneFrame
from vital_occ_stream.stream.models import StreamState
from vital_occ_stream.testing.oracles import brute_box_index

CHANNELS = 8
CAR = class_id("car")
PEDESTRIAN = class_id("pedestrian")


@pytest.fixture
def spec_half():
    return GridSpec(dims=(10, 10, 4), min_corner=(-8.0, -8.0, -1.0), resolution=1.6)


def _query(center, size=(2.0, 2.0, 1.5), confidence=0.9, cls=CAR, track=0, feature=None, yaw=0.0):
    feat = np.zeros(CHANNELS, dtype=np.float32) if feature is None else feature
    return InstanceQuery(feat, Box3D(center, size, yaw), confidence, cls, track)


def _frame(spec, boxes, timestep=0):
    return SceneFrame(
        timestep=timestep,
        ego=EgoPose(timestep, RigidTransform.identity()),
        spec=spec,
        gt_grid=SemanticGrid.empty(spec.dims),
        dynamic_boxes=boxes,
    )


# ---------------------------------------------------------------------------
# Detector sources
# ---------------------------------------------------------------------------

def test_oracle_noise_is_seeded(spec_half):
    boxes = [
        DynamicBox(CAR, Box3D((1.0, 2.0, 0.5), (4.0, 2.0, 1.5)), (1.0, 0.0, 0.0), 3),
        DynamicBox(PEDESTRIAN, Box3D((-2.0, 1.0, 0.8), (0.7, 0.7, 1.8)), (0.0, 0.0, 0.0), 1),
    ]
    frame = _frame(spec_half, boxes)
    params = DetectorParams.from_store(WeightStore(), CHANNELS, seed=0)
    config = DetectorConfig(seed=4)
    state = StreamState.cold_start(CHANNELS, spec_half)
    a = detector_source(frame, state, config, params)
    b = detector_source(frame, state, config, params)
    assert [q.track_id for q in a] == [1, 3]
    for qa, qb in zip(a, b):
        assert np.array_equal(qa.feature, qb.feature)
        assert qa.box.center == qb.box.center
        assert 0.0 <= qa.confidence <= 1.0


def test_zero_noise_reproduces_ground_truth(spec_half):
    box = Box3D((1.0, 2.0, 0.5), (4.0, 2.0, 1.5), 0.3)
    frame = _frame(spec_half, [DynamicBox(CAR, box, (0.0, 0.0, 0.0), 0)])
    config = DetectorConfig(center_sigma=0.0, size_sigma=0.0, yaw_sigma=0.0, confidence_std=0.0, confidence_mean=0.7)
    params = DetectorParams.from_store(WeightStore(), CHANNELS, seed=0)
    (q,) = detector_source(frame, StreamState.cold_start(CHANNELS, spec_half), config, params)
    assert q.box.center == box.center and q.box.size == box.size
    assert q.confidence == pytest.approx(0.7)


def test_cap_queries_keeps_most_confident_in_order():
    queries = [_query((0.0, 0.0, 0.0), confidence=c, track=i) for i, c in enumerate([0.2, 0.9, 0.5, 0.7])]
    assert [q.track_id for q in cap_queries(queries, 2)] == [1, 3]


def test_replay_file_round_trip(tmp_path, spec_half):
    path = tmp_path / "detections.txt"
    path.write_text(
        "# frame track class conf cx cy cz l w h yaw\n"
        f"0 5 {CAR} 0.8 1.0 2.0 0.5 4.0 2.0 1.5 0.0\n"
        f"1 5 {CAR} 0.7 1.5 2.0 0.5 4.0 2.0 1.5 0.0\n",
        encoding="utf-8",
    )
    replay = ReplayDetections.load(path)
    config = DetectorConfig(mode=DetectorMode.REPLAY)
    params = DetectorParams.from_store(WeightStore(), CHANNELS, seed=0)
    queries = detector_source(_frame(spec_half, [], timestep=1), StreamState.cold_start(CHANNELS, spec_half), config, params, replay)
    assert len(queries) == 1
    assert queries[0].confidence == pytest.approx(0.7)
    assert queries[0].box.center == (1.5, 2.0, 0.5)


def test_replay_rejects_bad_confidence(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text(f"0 1 {CAR} 1.5 0 0 0 1 1 1 0\n", encoding="utf-8")
    with pytest.raises(InputError) as exc:
        ReplayDetections.load(path)
    assert exc.value.line == 1
    assert exc.value.exit_code == 1


def test_replay_mode_without_file(spec_half):
    config = DetectorConfig(mode=DetectorMode.REPLAY)
    params = DetectorParams.from_store(WeightStore(), CHANNELS, seed=0)
    with pytest.raises(ConfigurationError):
        detector_source(_frame(spec_half, []), StreamState.cold_start(CHANNELS, spec_half), config, params)


# ---------------------------------------------------------------------------
# V2Q deformable attention
# ---------------------------------------------------------------------------

def test_deform_attention_weights_normalized(rng):
    params = DeformAttnParams.from_store(WeightStore(), CHANNELS, 4, 3, seed=0)
    alpha = deform_attention_weights(rng.standard_normal((5, CHANNELS)) * 10.0, params)
    assert alpha.shape == (5, 4, 3)
    assert np.allclose(alpha.sum(axis=-1), 1.0, atol=1e-6)


def test_v2q_on_zero_volume_keeps_features(rng, spec_half):
    params = DeformAttnParams.from_store(WeightStore(), CHANNELS, 2, 2, seed=0)
    queries = [_query((0.0, 0.0, 0.0), feature=rng.standard_normal(CHANNELS).astype(np.float32))]
    updated = v2q_deform_attn(queries, VoxelVolume.zeros(CHANNELS, spec_half.dims), params, spec_half)
    assert np.allclose(updated[0].feature, queries[0].feature)
    assert updated[0].box is queries[0].box


def test_v2q_changes_features_on_nonzero_volume(rng, spec_half):
    params = DeformAttnParams.from_store(WeightStore(), CHANNELS, 2, 2, seed=0)
    queries = [_query((0.0, 0.0, 0.0))]
    vol = VoxelVolume.full(CHANNELS, spec_half.dims, 1.0)
    updated = v2q_deform_attn(queries, vol, params, spec_half)
    assert not np.allclose(updated[0].feature, 0.0)


def test_v2q_with_no_queries(spec_half):
    params = DeformAttnParams.from_store(WeightStore(), CHANNELS, 2, 2, seed=0)
    assert v2q_deform_attn([], VoxelVolume.zeros(CHANNELS, spec_half.dims), params, spec_half) == []


def test_v2q_with_zero_output_projection_is_identity(rng, spec_half):
    params = DeformAttnParams.from_store(WeightStore(), CHANNELS, 2, 2, seed=0)
    params = replace(params, output_proj=np.zeros_like(params.output_proj))
    queries = [_query((0.0, 0.0, 0.0), feature=rng.standard_normal(CHANNELS).astype(np.float32))]
    vol = VoxelVolume(rng.standard_normal((CHANNELS, *spec_half.dims)).astype(np.float32))
    updated = v2q_deform_attn(queries, vol, params, spec_half)
    assert np.array_equal(updated[0].feature, queries[0].feature)


def test_v2q_single_point_update(rng, spec_half):
    """Zero offsets and attention logits: every sample sits at the center with weight 1/O."""
    params = DeformAttnParams.from_store(WeightStore(), CHANNELS, 2, 2, seed=0)
    params = replace(
        params,
        offset_net=LinearLayer.zeros(2 * 2 * 3, CHANNELS),
        weight_net=LinearLayer.zeros(2 * 2, CHANNELS),
    )
    vol = VoxelVolume(rng.standard_normal((CHANNELS, *spec_half.dims)).astype(np.float32))
    feature = rng.standard_normal(CHANNELS).astype(np.float32)
    # center of cell (5, 5, 2)
    queries = [_query((0.8, 0.8, 3.0), feature=feature)]
    updated = v2q_deform_attn(queries, vol, params, spec_half)

    sample = vol.astype64()[:, 5, 5, 2]
    value = params.value_proj.astype(np.float64)
    output = params.output_proj.astype(np.float64)
    update = sum(output[h] @ (value[h] @ sample) for h in range(2))
    assert np.allclose(updated[0].feature, feature + update, atol=1e-5)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------

def test_selection_confidence_threshold_is_exclusive():
    config = SelectionConfig(confidence_threshold=0.3)
    queries = [_query((0.0, 0.0, 0.0), confidence=c, track=i) for i, c in enumerate([0.2, 0.3, 0.31])]
    kept = select_queries(queries, None, SelectionMode.INFER, config)
    assert [q.track_id for q in kept] == [2]


def test_raising_confidence_never_deselects(rng):
    config = SelectionConfig(confidence_threshold=0.3)
    queries = [
        _query((float(i), 0.0, 0.0), confidence=float(c), track=i)
        for i, c in enumerate(rng.uniform(0.0, 1.0, size=12))
    ]
    kept = {q.track_id for q in select_queries(queries, None, SelectionMode.INFER, config)}
    for i in kept:
        boosted = list(queries)
        boosted[i] = InstanceQuery(queries[i].feature, queries[i].box, min(1.0, queries[i].confidence + 0.2), CAR, i)
        assert i in {q.track_id for q in select_queries(boosted, None, SelectionMode.INFER, config)}


def test_train_mode_selection_is_monotone_in_confidence():
    config = SelectionConfig()
    gt = [
        DynamicBox(CAR, Box3D((0.0, 0.0, 0.0), (4.0, 2.0, 1.5)), (0.0, 0.0, 0.0), 0),
        DynamicBox(CAR, Box3D((20.0, 0.0, 0.0), (4.0, 2.0, 1.5)), (0.0, 0.0, 0.0), 1),
    ]
    near = _query((0.2, 0.0, 0.0), size=(4.0, 2.0, 1.5), confidence=0.5, track=0)
    other = _query((20.1, 0.0, 0.0), size=(4.0, 2.0, 1.5), confidence=0.7, track=1)
    assert [q.track_id for q in select_queries([near, other], gt, SelectionMode.TRAIN, config)] == [0, 1]
    boosted = _query((0.2, 0.0, 0.0), size=(4.0, 2.0, 1.5), confidence=0.95, track=0)
    assert [q.track_id for q in select_queries([boosted, other], gt, SelectionMode.TRAIN, config)] == [0, 1]


def test_train_mode_large_object_iou():
    config = SelectionConfig()
    gt = [DynamicBox(CAR, Box3D((0.0, 0.0, 0.0), (4.0, 2.0, 1.5)), (0.0, 0.0, 0.0), 0)]
    half_overlap = _query((4.0 / 3.0, 0.0, 0.0), size=(4.0, 2.0, 1.5), confidence=0.4)
    far = _query((3.5, 0.0, 0.0), size=(4.0, 2.0, 1.5), confidence=0.9)
    assert len(select_queries([half_overlap], gt, SelectionMode.TRAIN, config)) == 1
    assert select_queries([far], gt, SelectionMode.TRAIN, config) == []


def test_train_mode_small_object_score():
    config = SelectionConfig()
    gt_box = Box3D((20.0, 0.0, 0.0), (0.8, 0.8, 1.8))
    gt = [DynamicBox(PEDESTRIAN, gt_box, (0.0, 0.0, 0.0), 0)]
    query = _query((20.3, 0.0, 0.0), size=(1.3, 0.8, 1.8), cls=PEDESTRIAN)
    assert small_object_score(query.box, gt_box, 2.0, 1.0) == pytest.approx(1.1)
    assert len(select_queries([query], gt, SelectionMode.TRAIN, config)) == 1
    distant = _query((21.0, 0.0, 0.0), size=(0.8, 0.8, 1.8), cls=PEDESTRIAN)
    assert select_queries([distant], gt, SelectionMode.TRAIN, config) == []


def test_train_mode_requires_ground_truth():
    with pytest.raises(ContractViolation):
        select_queries([_query((0.0, 0.0, 0.0))], None, SelectionMode.TRAIN, SelectionConfig())


def test_matching_is_one_to_one_by_confidence():
    gt = [DynamicBox(CAR, Box3D((0.0, 0.0, 0.0), (4.0, 2.0, 1.5)), (0.0, 0.0, 0.0), 0)]
    low = _query((0.2, 0.0, 0.0), size=(4.0, 2.0, 1.5), confidence=0.5)
    high = _query((0.4, 0.0, 0.0), size=(4.0, 2.0, 1.5), confidence=0.9)
    assert match_queries([low, high], gt) == [None, 0]


# ---------------------------------------------------------------------------
# Voxel / query index
# ---------------------------------------------------------------------------

def test_index_matches_brute_force(rng, spec_half):
    queries = [
        _query(tuple(rng.uniform(-7.0, 7.0, 3)), size=tuple(rng.uniform(0.5, 5.0, 3)), yaw=float(rng.uniform(-3, 3)), track=j)
        for j in range(30)
    ]
    index = build_voxel_query_index(queries, spec_half)
    assert index.as_dict() == brute_box_index([q.box for q in queries], spec_half)
    assert np.all(np.diff(index.cells) > 0)


def test_index_lookup(spec_half):
    index = build_voxel_query_index([_query((0.0, 0.0, 0.0), size=(3.3, 3.3, 3.3))], spec_half)
    cell = int(spec_half.flat_index(spec_half.world_to_cell(np.array([0.5, 0.5, 0.5]))))
    assert index.queries_for(cell).tolist() == [0]
    assert index.queries_for(0).tolist() == []


def test_empty_index(spec_half):
    index = build_voxel_query_index([], spec_half)
    assert index.num_cells == 0
    assert index.as_dict() == {}


# ---------------------------------------------------------------------------
# DQA and FFN
# ---------------------------------------------------------------------------

def test_dqa_touches_only_indexed_cells(rng, spec_half):
    params = DqaParams.from_store(WeightStore(), CHANNELS, seed=0)
    queries = [
        _query((0.0, 0.0, 0.0), size=(3.0, 3.0, 3.0), feature=rng.standard_normal(CHANNELS).astype(np.float32)),
        _query((1.0, 0.5, 0.0), size=(3.0, 3.0, 3.0), feature=rng.standard_normal(CHANNELS).astype(np.float32), track=1),
    ]
    index = build_voxel_query_index(queries, spec_half)
    v_sa = VoxelVolume(rng.standard_normal((CHANNELS, *spec_half.dims)).astype(np.float32))
    v_dqa = dqa(v_sa, queries, index, params, spec_half)

    untouched = np.ones(spec_half.num_cells, dtype=bool)
    untouched[index.cells] = False
    assert np.array_equal(v_dqa.cells()[untouched], v_sa.cells()[untouched])
    assert not np.array_equal(v_dqa.cells()[index.cells], v_sa.cells()[index.cells])


def test_dqa_attention_rows_sum_to_one(rng, spec_half):
    params = DqaParams.from_store(WeightStore(), CHANNELS, seed=0)
    queries = [_query((0.0, 0.0, 0.0), size=(4.0, 4.0, 4.0), track=j, feature=rng.standard_normal(CHANNELS).astype(np.float32)) for j in range(3)]
    index = build_voxel_query_index(queries, spec_half)
    trace = dqa_trace(VoxelVolume.zeros(CHANNELS, spec_half.dims), queries, index, params, spec_half)
    assert np.allclose(trace.alpha.sum(axis=1), 1.0)
    assert np.all(trace.gate > 0.0) and np.all(trace.gate < 1.0)


def test_dqa_with_empty_index_returns_input(rng, spec_half):
    params = DqaParams.from_store(WeightStore(), CHANNELS, seed=0)
    v_sa = VoxelVolume(rng.standard_normal((CHANNELS, *spec_half.dims)).astype(np.float32))
    assert dqa(v_sa, [], build_voxel_query_index([], spec_half), params, spec_half) is v_sa


def test_ffn_residual_standardizes_cells(rng, spec_half):
    params = DqaParams.from_store(WeightStore(), CHANNELS, seed=0)
    v = VoxelVolume((rng.standard_normal((CHANNELS, *spec_half.dims)) * 3.0).astype(np.float32))
    out = ffn_residual(v, params)
    assert out.dims == v.dims
    assert np.allclose(out.cells().astype(np.float64).mean(axis=1), 0.0, atol=1e-5)


def test_dqa_single_query_closed_form(rng, spec_half):
    params = DqaParams.from_store(WeightStore(), CHANNELS, seed=0)
    feature = rng.standard_normal(CHANNELS).astype(np.float32)
    queries = [_query((0.0, 0.0, 0.0), size=(3.0, 3.0, 3.0), feature=feature)]
    index = build_voxel_query_index(queries, spec_half)
    v_sa = VoxelVolume(rng.standard_normal((CHANNELS, *spec_half.dims)).astype(np.float32))
    v_dqa = dqa(v_sa, queries, index, params, spec_half)

    # one candidate query gets all the attention
    context = params.w_v.apply(feature.astype(np.float64))
    cells = v_sa.cells()[index.cells].astype(np.float64)
    gate = params.gate.apply(np.concatenate([cells, np.broadcast_to(context, cells.shape)], axis=1))
    assert index.num_cells > 0
    assert np.allclose(v_dqa.cells()[index.cells], cells + gate * context, atol=1e-5)


def test_closed_gate_leaves_cells_unchanged(rng, spec_half):
    params = DqaParams.from_store(WeightStore(), CHANNELS, seed=0)
    closed = LinearLayer(params.gate.weights, np.full(CHANNELS, -50.0), Activation.SIGMOID)
    params = replace(params, gate=closed)
    queries = [_query((0.0, 0.0, 0.0), size=(4.0, 4.0, 4.0), track=j, feature=rng.standard_normal(CHANNELS).astype(np.float32)) for j in range(2)]
    index = build_voxel_query_index(queries, spec_half)
    v_sa = VoxelVolume(rng.standard_normal((CHANNELS, *spec_half.dims)).astype(np.float32))
    v_dqa = dqa(v_sa, queries, index, params, spec_half)
    assert np.abs(v_dqa.astype64() - v_sa.astype64()).max() <= 1e-5


def test_ffn_residual_output_is_finite(rng, spec_half):
    params = DqaParams.from_store(WeightStore(), CHANNELS, seed=0)
    for scale in (0.0, 1e-6, 1.0, 1e3, 1e6):
        data = rng.standard_normal((CHANNELS, *spec_half.dims)) * scale
        # constant cells have zero channel variance
        data[:, 0] = 7.0
        out = ffn_residual(VoxelVolume(data.astype(np.float32)), params)
        assert np.all(np.isfinite(out.data))
