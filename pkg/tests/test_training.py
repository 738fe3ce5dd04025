import csv

import numpy as np
import pytest

from talkmesh.encoding import resample_time
from talkmesh.errors import NonFiniteLoss
from talkmesh.losses import LossWeights
from talkmesh.sampler import SampleSet, pin_all_vertices
from talkmesh.synthesis import ModelConfig, init_params
from talkmesh.synthetic import make_sequence, make_synthetic_dataset
from talkmesh.training import (Adam, TrainingConfig, eye_sample_indices, load_checkpoint, prepare_item,
                               resample_ground_truth,
                               save_checkpoint, train, write_history_csv)

MODEL = ModelConfig(D=8, H=6, H1=6, L=4, d_k=4, h=16)


@pytest.fixture(scope="module")
def data():
    return make_synthetic_dataset(0, 40, T=6, D=8, M=50)


def cfg(**kw):
    return TrainingConfig(**{"steps": 4, "M": 50, "model": MODEL, **kw})


class TestGroundTruthResampling:
    def test_vertex_samples_gather(self, data):
        item, _, atlas = data
        out = resample_ground_truth(item.gt_frames, pin_all_vertices(atlas), item.template.faces)
        assert out.tobytes() == item.gt_frames.tobytes()

    def test_centroid(self, data):
        item, _, _ = data
        s = SampleSet(np.zeros((1, 2)), np.array([3]), np.full((1, 3), 1 / 3), np.zeros((0, 3), int))
        out = resample_ground_truth(item.gt_frames, s, item.template.faces)
        np.testing.assert_allclose(out[:, 0], item.gt_frames[:, item.template.faces[3]].mean(1), atol=1e-15)

    def test_affine_in_uv(self, data):
        item, samples, atlas = data
        A = np.random.default_rng(0).standard_normal((6, 2, 3))
        gt = np.einsum("nk,tkc->tnc", atlas.uv, A)
        out = resample_ground_truth(gt, samples, item.template.faces)
        np.testing.assert_allclose(out, np.einsum("mk,tkc->tmc", samples.points, A), atol=1e-12)

    def test_eye_indices_are_eye_dominated(self, data):
        item, samples, _ = data
        idx = eye_sample_indices(samples, item.template.faces, item.masks)
        dom = samples.dominant_vertices(item.template.faces)
        assert set(idx) == {i for i in range(samples.M) if dom[i] in set(item.masks.eye_vertices)}


class TestAdam:
    def test_first_step(self):
        opt = Adam(lr=0.1)
        p = {"x": np.array([1.0, -2.0])}
        g = {"x": np.array([0.5, -4.0])}
        opt.update(p, g, ["x"])
        np.testing.assert_allclose(p["x"], [1.0 - 0.1 * 0.5 / (0.5 + 1e-8), -2.0 + 0.1 * 4.0 / (4.0 + 1e-8)], rtol=1e-15)

    def test_zero_lr_identity(self):
        opt = Adam(lr=0.0)
        p = {"x": np.array([1.0, -2.0])}
        for _ in range(3):
            opt.update(p, {"x": np.array([0.3, 7.0])}, ["x"])
        np.testing.assert_array_equal(p["x"], [1.0, -2.0])


class TestTrain:
    def test_zero_learning_rate(self, data):
        item, samples, _ = data
        p0 = init_params(MODEL, 0)
        st = train([item], cfg(learning_rate=0.0), p0, samples=[samples])
        for k, v in p0.items():
            assert st.params[k].tobytes() == v.tobytes()

    def test_deterministic(self, data):
        item, samples, _ = data
        a = train([item], cfg(), init_params(MODEL, 1))
        b = train([item], cfg(), init_params(MODEL, 1))
        assert a.history == b.history
        for k in a.params:
            assert a.params[k].tobytes() == b.params[k].tobytes()

    def test_loss_decreases(self, data):
        item, samples, _ = data
        st = train([item], cfg(steps=30, learning_rate=1e-3), init_params(MODEL, 0), samples=[samples])
        assert st.history[-1]["L_rec"] < 0.5 * st.history[0]["L_rec"]

    def test_checkpoint_resume_bitwise(self, data, tmp_path):
        item, samples, _ = data
        c = cfg(steps=6)
        full = train([item], c, init_params(MODEL, 2), samples=[samples])
        half = train([item], cfg(steps=3), init_params(MODEL, 2), samples=[samples])
        p = str(tmp_path / "ck.feat")
        save_checkpoint(p, half, cfg(steps=3))
        state, loaded_cfg, _, _ = load_checkpoint(p)
        assert loaded_cfg == cfg(steps=3)
        assert state.optimizer.step == 3
        resumed = train([item], cfg(steps=3), None, state=state, samples=[samples])
        for k in full.params:
            assert resumed.params[k].tobytes() == full.params[k].tobytes()
        assert [h["L"] for h in resumed.history] == [h["L"] for h in full.history[3:]]

    def test_ablation_leaves_unused_params(self, data):
        item, samples, _ = data
        m = ModelConfig(**{**MODEL.to_dict(), "use_rgcn": False})
        p0 = init_params(m, 0)
        st = train([item], cfg(model=m), p0, samples=[samples])
        assert st.params["rgcn.W0"].tobytes() == p0["rgcn.W0"].tobytes()
        assert st.params["mlp_rgcn.W0"].tobytes() != p0["mlp_rgcn.W0"].tobytes()

    def test_resample_mode_refreshes_samples(self, data):
        item = data[0]
        frozen = train([item], cfg(steps=3), init_params(MODEL, 0))
        res = train([item], cfg(steps=3, sampling_mode="resample", learn_sampling=True), init_params(MODEL, 0))
        assert len(res.history) == 3
        assert not np.array_equal(res.prepared[0].ctx.samples.points, frozen.prepared[0].ctx.samples.points)
        assert not np.array_equal(res.prepared[0].dist.logits, frozen.prepared[0].dist.logits)

    def test_non_finite_aborts(self, data):
        item, samples, _ = data
        p = init_params(MODEL, 0)
        p["dec.b4"] = np.full(3, np.nan)
        with pytest.raises(NonFiniteLoss, match="prediction"):
            train([item], cfg(), p, samples=[samples])

    def test_history_csv(self, data, tmp_path):
        item, samples, _ = data
        st = train([item], cfg(steps=2), init_params(MODEL, 0), samples=[samples])
        p = str(tmp_path / "h.csv")
        write_history_csv(st.history, p)
        rows = list(csv.reader(open(p)))
        assert rows[0] == ["step", "L", "L_rec", "L_v", "L_eye"]
        assert [r[0] for r in rows[1:]] == ["0", "1"]
        assert float(rows[1][2]) == st.history[0]["L_rec"]

    def test_default_sample_count_is_twice_vertices(self, data):
        item, _, atlas = data
        prep = prepare_item(item, TrainingConfig(model=MODEL), atlas=atlas)
        assert prep.ctx.samples.M == 2 * item.template.n_vertices

    def test_config_round_trip(self):
        c = cfg(weights=LossWeights(1.0, 2.0, 3.0), sampling_mode="resample")
        assert TrainingConfig.from_dict(c.to_dict()) == c
        with pytest.raises(ValueError):
            TrainingConfig(sampling_mode="sometimes")


class TestSyntheticData:
    def test_same_seed_bitwise(self):
        a, sa, ua = make_synthetic_dataset(3, 40, T=5, D=4, M=40)
        b, sb, ub = make_synthetic_dataset(3, 40, T=5, D=4, M=40)
        assert a.gt_frames.tobytes() == b.gt_frames.tobytes()
        assert a.audio.frames.tobytes() == b.audio.frames.tobytes()
        assert sa.points.tobytes() == sb.points.tobytes() and ua.uv.tobytes() == ub.uv.tobytes()

    def test_zero_amplitude_static(self, data):
        item = data[0]
        gt, _ = make_sequence(item.template, 1, 5, 4, amplitude=0.0)
        for t in range(5):
            np.testing.assert_array_equal(gt[t], item.template.vertices)

    def test_masks_non_empty(self, data):
        m = data[0].masks
        assert min(len(m.lip_vertices), len(m.eye_vertices), len(m.upper_face_vertices), len(m.keypoints)) > 0

    def test_audio_predicts_motion(self):
        item, _, _ = make_synthetic_dataset(0, 200, T=20, D=16, M=300)
        gt, audio = make_sequence(item.template, 5, 200, 16)
        latent = resample_time(audio, 200)
        target = (gt - item.template.vertices)[:, item.masks.lip_vertices].mean(axis=1)

        def probe_residual(x):
            X = np.column_stack([x, np.ones(len(x))])
            coef, *_ = np.linalg.lstsq(X, target, rcond=None)
            return np.mean((X @ coef - target) ** 2)

        shuffled = latent[np.random.default_rng(0).permutation(200)]
        assert probe_residual(latent) < probe_residual(shuffled)
