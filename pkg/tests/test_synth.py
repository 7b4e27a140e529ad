import numpy as np
import pytest

from viou.errors import SpecError, UnknownPreset
from viou.geom import iou
from viou.metrics import clear_mot
from viou.mot_io import tracks_to_records
from viou.synth import ObjectSpec, Occlusion, PRESETS, ScenarioSpec, generate, pairwise_angles_deg, preset
from viou.tracker import run_tracker


def gt_boxes(sc, tid=1):
    return {r.frame: r.bbox for r in sc.ground_truth if r.track_id == tid}


@pytest.mark.parametrize("name", PRESETS)
def test_same_seed_same_output(name, tmp_path):
    a = generate(preset(name, 5))
    b = generate(preset(name, 5))
    assert a.detections == b.detections and np.array_equal(a.embeddings, b.embeddings)
    pa = a.write(tmp_path / "a")
    pb = b.write(tmp_path / "b")
    for key in pa:
        assert pa[key].read_bytes() == pb[key].read_bytes()


def test_different_seeds_differ():
    assert generate(preset("crossing", 1)).detections != generate(preset("crossing", 2)).detections


def test_zero_noise_detections_equal_gt():
    sc = generate(preset("fast_motion", 0).zero_noise())
    gt = gt_boxes(sc)
    assert sorted(sc.detections) == sorted(gt)
    for f, dets in sc.detections.items():
        assert len(dets) == 1
        assert dets[0].bbox.as_tuple() == pytest.approx(gt[f].as_tuple(), abs=1e-9)
    res = run_tracker(sc.tracker_frames())
    assert clear_mot(sc.ground_truth, tracks_to_records(res.tracks)).mota == 1.0


def test_long_occlusion_hole():
    sc = generate(preset("long_occlusion", 0).zero_noise())
    assert sorted(gt_boxes(sc)) == list(range(1, 61))
    assert sorted(sc.detections) == [f for f in range(1, 61) if not 25 <= f <= 32]


def test_fast_motion_geometry():
    sc = generate(preset("fast_motion", 0))
    gt = gt_boxes(sc)
    frames = sorted(gt)
    steps = [gt[b].cx - gt[a].cx for a, b in zip(frames, frames[1:])]
    fast = [k for k, s in enumerate(steps) if s == pytest.approx(1.2 * gt[frames[0]].w)]
    assert len(fast) >= 8
    for k in fast:
        assert iou(gt[frames[k]], gt[frames[k + 1]]) == 0.0


def test_crossing_paths_and_appearance():
    sc = generate(preset("crossing", 0))
    a, b = gt_boxes(sc, 1), gt_boxes(sc, 2)
    diff = [a[f].cy - b[f].cy for f in sorted(a)]
    assert diff[0] < 0 < diff[-1]
    ang = pairwise_angles_deg(sc.directions)
    assert ang[0, 1] >= 60.0


def test_dense_parallel_similar_identities():
    sc = generate(preset("dense_parallel", 0))
    assert len(sc.spec.objects) == 10
    ang = pairwise_angles_deg(sc.directions)
    off = ang[~np.eye(10, dtype=bool)]
    assert off.max() <= 10.0
    ys = [o.waypoints[0][2] for o in sc.spec.objects]
    assert np.allclose(np.diff(ys), 45.0)


def test_embeddings_unit_and_identity_tagged():
    sc = generate(preset("crossing", 0))
    assert np.allclose(np.linalg.norm(sc.embeddings, axis=1), 1.0, atol=1e-5)
    rows = [r.embedding_row for rs in sc.detections.values() for r in rs]
    assert rows == list(range(len(sc.embeddings)))
    assert set(np.unique(sc.identities)) <= {-1, 0, 1}


def test_unknown_preset():
    with pytest.raises(UnknownPreset):
        preset("rush_hour")


@pytest.mark.parametrize("spec", [
    ScenarioSpec("bad", 0, 0, ()),
    ScenarioSpec("bad", 0, 10, (ObjectSpec(((5, 0, 0), (3, 1, 1)), (10, 10)),)),
    ScenarioSpec("bad", 0, 10, (ObjectSpec(((1, 0, 0), (20, 1, 1)), (10, 10)),)),
    ScenarioSpec("bad", 0, 10, (ObjectSpec(((1, 0, 0), (10, 1, 1)), (10, 10)),), (Occlusion(0, 8, 5),)),
    ScenarioSpec("bad", 0, 10, (ObjectSpec(((1, 0, 0), (10, 1, 1)), (10, 10)),), (Occlusion(3, 2, 2),)),
])
def test_invalid_specs(spec):
    with pytest.raises(SpecError):
        generate(spec)
