import os
import subprocess

import numpy as np
import pytest

import tcedit


def small_show(seed=0, frames=240, tracks=6):
    spec = tcedit.SyntheticSpec()
    spec.seed = seed
    spec.duration_frames = frames
    spec.tracks = tracks
    pool, ann = tcedit.generate_synthetic_show(spec)
    return tcedit.Scene(f"s{seed}", pool, ann)


def small_config():
    c = tcedit.ModelConfig()
    c.d_model = 16
    c.d_ff = 32
    c.d_fuse = 16
    c.n_layers_t = 1
    c.n_layers_c = 1
    return c


def test_pool_and_annotation_round_trip(tmp_path):
    scene = small_show()
    assert scene.pool.features.shape == (240, 6, 16)
    tcedit.save_pool(tmp_path / "a.pool", scene.pool)
    tcedit.save_annotation(tmp_path / "a.ann", scene.annotation)
    assert tcedit.load_pool(tmp_path / "a.pool") == scene.pool
    assert tcedit.load_annotation(tmp_path / "a.ann") == scene.annotation
    with pytest.raises(tcedit.FormatError):
        (tmp_path / "bad.pool").write_bytes(b"NOPE1\n{}\n")
        tcedit.load_pool(tmp_path / "bad.pool")


def test_pool_from_numpy():
    arr = np.arange(2 * 3 * 4, dtype=np.float32).reshape(2, 3, 4)
    pool = tcedit.FeaturePool(arr, fps=25.0)
    assert (pool.frames, pool.tracks, pool.width) == (2, 3, 4)
    np.testing.assert_array_equal(pool.features, arr)
    with pytest.raises(ValueError):
        tcedit.FeaturePool(np.zeros((2, 3), dtype=np.float32))


def test_shot_conversions():
    ann = tcedit.EditAnnotation([0, 0, 1, 1, 1], tracks=2)
    shots = tcedit.shots_from_annotation(ann)
    assert shots == [tcedit.Shot(0, 2, 0), tcedit.Shot(2, 5, 1)]
    assert tcedit.annotation_from_shots(shots, 5, 2) == ann
    with pytest.raises(ValueError):
        tcedit.annotation_from_shots([tcedit.Shot(0, 2, 0), tcedit.Shot(3, 5, 1)], 5, 2)


def test_metrics():
    assert tcedit.precision_at([0.9, 0.1, 0.6], [1, 0, 0]) == pytest.approx(50.0)
    assert tcedit.average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(250.0 / 3.0)
    assert tcedit.track_accuracy([([0.1, 0.9], [0, 1]), ([0.5, 0.5], [0, 1])]) == 50.0
    rng = np.random.default_rng(0)
    groups = []
    for _ in range(2000):
        labels = [0] * 6
        labels[rng.integers(6)] = 1
        groups.append(([0.0] * 6, labels))
    report = tcedit.random_baseline(groups, seed=1)
    assert abs(report.precision_at_half - 16.66) < 0.6
    assert report.to_dict()["instance_count"] == 12000


def test_model_scores_and_permutation():
    model = tcedit.init_params(small_config())
    rng = np.random.default_rng(1)
    history = rng.standard_normal((16, 16)).astype(np.float32)
    context = rng.standard_normal((5, 16)).astype(np.float32)
    scores = model.scores(history, context)
    assert len(scores) == 5
    assert all(0.0 < s < 1.0 for s in scores)
    perm = [3, 0, 4, 1, 2]
    permuted = model.scores(history, context[perm])
    np.testing.assert_allclose(permuted, [scores[p] for p in perm], atol=1e-5)
    assert model.predict_score(history, context, 2) == pytest.approx(scores[2])
    assert {"input.weight", "fuse2.weight", "temporal.layer0.attn.query"} <= set(model.parameter_names())


def test_train_evaluate_edit(tmp_path):
    scenes = [small_show(1), small_show(2)]
    train_scenes, test_scenes = tcedit.split_scenes(scenes, seed=0)
    assert len(train_scenes) == 1 and len(test_scenes) == 1
    tc = tcedit.TrainConfig()
    tc.epochs = 2
    model, curve = tcedit.train(train_scenes, small_config(), tc)
    assert [epoch for _, epoch, _ in curve] == [1, 2]
    report = tcedit.evaluate(model, test_scenes)
    assert report.positives_count == report.group_count
    assert report == tcedit.evaluate(model, test_scenes)

    tcedit.save_checkpoint(tmp_path / "m.ckpt", model)
    loaded = tcedit.load_checkpoint(tmp_path / "m.ckpt")
    for name in model.parameter_names():
        np.testing.assert_array_equal(model.parameter(name), loaded.parameter(name))

    options = tcedit.EditOptions()
    options.min_shot_frames = 24
    edit = tcedit.autoregressive_edit(loaded, test_scenes[0].pool, options)
    shots = tcedit.shots_from_annotation(edit)
    assert shots[0].start == 0 and shots[-1].end == edit.frames
    assert all(s.end - s.start >= 24 for s in shots[:-1])


def test_gradcheck():
    result = tcedit.gradcheck_model(tcedit.tiny_model_config())
    assert result["passed"]
    assert result["worst"] < 1e-4
    assert len(result["tensors"]) > 10


def test_config_errors():
    with pytest.raises(tcedit.ConfigError):
        c = tcedit.ModelConfig()
        c.d_model = 10
        tcedit.init_params(c)


def test_run_cli(tmp_path):
    code, out, err = tcedit.run_cli(["gen", "--out", str(tmp_path), "--count", "2",
                                     "--generator.duration_frames", "200"])
    assert code == 0, err
    assert "median" in out
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "scene_0.ann", "scene_0.pool", "scene_1.ann", "scene_1.pool"]
    code, _, err = tcedit.run_cli(["gen", "--out", str(tmp_path), "--model.n_heads", "3"])
    assert code == 1 and "n_heads" in err


def test_binary_gradcheck():
    binary = os.environ.get("TCEDIT_BIN")
    if not binary:
        pytest.skip("TCEDIT_BIN not set")
    proc = subprocess.run([binary, "gradcheck"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "PASS" in proc.stdout
