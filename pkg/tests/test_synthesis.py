import json
import os

import numpy as np
import pytest

from talkmesh.checks import TOY, check_decoder, end_to_end_check, toy_mesh
from talkmesh.encoding import synth_features
from talkmesh.errors import ShapeMismatch
from talkmesh.mesh import Mesh, load_obj
from talkmesh.sampler import SampleSet, SamplingDistribution, draw_samples, pin_all_vertices
from talkmesh.synthesis import (AnimationSequence, ModelConfig, SequenceContext, decode_displacements, forward,
                                init_decoder_params, init_params, interpolate_features, sample_template_positions,
                                synthesize_sequence, trainable_names)
from talkmesh.uv import conformal_parameterize

SMALL = ModelConfig(D=6, H=5, H1=4, L=4, d_k=3, h=8)


@pytest.fixture(scope="module")
def setup(cap):
    atlas = conformal_parameterize(cap)
    samples = draw_samples(SamplingDistribution(np.zeros(atlas.n_faces)), atlas, 60, seed=2)
    return cap, atlas, samples


def one_sample(face, bary, M=1):
    return SampleSet(np.zeros((M, 2)), np.full(M, face), np.tile(bary, (M, 1)), np.zeros((0, 3), int))


class TestTemplatePositions:
    def test_vertex_sample_exact(self, setup):
        cap, atlas, _ = setup
        s = pin_all_vertices(atlas)
        assert sample_template_positions(s, cap).tobytes() == cap.vertices.tobytes()

    def test_centroid(self, setup):
        cap, _, _ = setup
        s = one_sample(5, [1 / 3, 1 / 3, 1 / 3])
        np.testing.assert_allclose(sample_template_positions(s, cap)[0], cap.vertices[cap.faces[5]].mean(0), atol=1e-15)

    def test_affine_template_reproduced(self, setup):
        cap, atlas, samples = setup
        A, c = np.array([[1.0, 2.0, -1.0], [0.5, -3.0, 2.0]]), np.array([0.1, 0.2, 0.3])
        flat = Mesh(atlas.uv @ A + c, cap.faces)
        want = samples.points @ A + c
        np.testing.assert_allclose(sample_template_positions(samples, flat), want, atol=1e-12)


class TestInterpolateFeatures:
    def test_pinned_vertices_gather(self, setup):
        cap, atlas, _ = setup
        f = np.random.default_rng(0).standard_normal((3, cap.n_vertices, 4))
        assert interpolate_features(pin_all_vertices(atlas), cap.faces, f).tobytes() == f.tobytes()

    def test_centroid_scalar(self):
        faces = np.array([[0, 1, 2]])
        f = np.array([[[0.0], [3.0], [6.0]]])
        out = interpolate_features(one_sample(0, [1 / 3, 1 / 3, 1 / 3]), faces, f)
        assert out[0, 0, 0] == pytest.approx(3.0, abs=1e-15)

    def test_linear(self, setup):
        cap, _, samples = setup
        rng = np.random.default_rng(1)
        Z, Z2 = rng.standard_normal((2, 2, cap.n_vertices, 3))
        a = -1.7
        lhs = interpolate_features(samples, cap.faces, a * Z + Z2)
        rhs = a * interpolate_features(samples, cap.faces, Z) + interpolate_features(samples, cap.faces, Z2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_shape_errors(self, setup):
        cap, _, samples = setup
        with pytest.raises(ShapeMismatch):
            interpolate_features(samples, cap.faces, np.zeros((2, 5, 3)))


class TestDecoder:
    def test_zero_final_layer(self):
        p = init_decoder_params(np.random.default_rng(0), 6, 8)
        p["dec.W4"][:] = 0.0
        out = decode_displacements(np.random.default_rng(1).standard_normal((2, 7, 6)), p)
        assert out.shape == (2, 7, 3) and np.all(out == 0.0)

    def test_locality(self):
        p = init_decoder_params(np.random.default_rng(0), 6, 8)
        x = np.random.default_rng(1).standard_normal((3, 5, 6))
        a = decode_displacements(x, p)
        x[1, 2] += 1.0
        b = decode_displacements(x, p)
        changed = np.any(a != b, axis=-1)
        expected = np.zeros((3, 5), bool)
        expected[1, 2] = True
        np.testing.assert_array_equal(changed, expected)

    def test_gradient(self):
        assert check_decoder().max_rel_error < 1e-4


class TestSynthesize:
    def test_zero_decoder_gives_static_face(self, setup):
        cap, atlas, samples = setup
        p = init_params(SMALL, 0)
        p["dec.W4"][:] = 0.0
        anim = synthesize_sequence(cap, atlas, samples, synth_features(0, 12, 6), p, 7, SMALL)
        assert anim.T == 7
        base = sample_template_positions(samples, cap)
        for t in range(7):
            assert anim.frames[t].tobytes() == base.tobytes()
        np.testing.assert_array_equal(anim.topology, samples.out_faces)

    def test_deterministic_and_finite(self, setup):
        cap, atlas, samples = setup
        p = init_params(SMALL, 3)
        audio = synth_features(1, 12, 6)
        a = synthesize_sequence(cap, atlas, samples, audio, p, 5, SMALL)
        b = synthesize_sequence(cap, atlas, samples, audio, p, 5, SMALL)
        assert a.frames.tobytes() == b.frames.tobytes()
        assert np.isfinite(a.frames).all()

    @pytest.mark.parametrize("flags", [dict(use_ste=False), dict(use_rgcn=False), dict(use_dcam=False)])
    def test_ablations_run(self, setup, flags):
        cap, atlas, samples = setup
        cfg = ModelConfig(**{**SMALL.to_dict(), **flags})
        anim = synthesize_sequence(cap, atlas, samples, synth_features(1, 12, 6), init_params(cfg, 0), 4, cfg)
        assert anim.frames.shape == (4, samples.M, 3)

    def test_no_ste_is_time_free(self, setup):
        cap, atlas, samples = setup
        cfg = ModelConfig(**{**SMALL.to_dict(), "use_ste": False})
        p = init_params(cfg, 0)
        ctx = SequenceContext(cap, atlas.uv, samples)
        latent = np.random.default_rng(0).standard_normal((4, 6))
        a, _ = forward(p, cfg, ctx, latent)
        p["ste.w"] = np.array(123.0)
        b, _ = forward(p, cfg, ctx, latent)
        assert a.tobytes() == b.tobytes()
        assert "ste.w" not in trainable_names(p, cfg)

    def test_trainable_names(self):
        p = init_params(SMALL, 0)
        full = trainable_names(p, SMALL)
        assert "ste.w" in full and not any(k.startswith("mlp_") for k in full)
        no_rgcn = trainable_names(p, ModelConfig(**{**SMALL.to_dict(), "use_rgcn": False}))
        assert "mlp_rgcn.W0" in no_rgcn and "rgcn.W0" not in no_rgcn


class TestEndToEndGradient:
    def test_toy_sizes(self):
        m = toy_mesh()
        assert m.n_vertices <= 12

    @pytest.mark.parametrize("flags", [{}, dict(use_ste=False), dict(use_rgcn=False), dict(use_dcam=False)])
    def test_full_pipeline(self, flags):
        cfg = ModelConfig(**{**TOY.to_dict(), **flags})
        assert end_to_end_check(cfg).max_rel_error < 1e-4


class TestAnimationIO:
    def test_container_round_trip(self, tmp_path):
        frames = np.random.default_rng(0).standard_normal((3, 4, 3))
        a = AnimationSequence(frames, [[0, 1, 2], [0, 2, 3]], 25.0)
        p = str(tmp_path / "a.feat")
        a.save(p)
        b = AnimationSequence.load(p)
        assert b.frames.tobytes() == frames.tobytes() and b.frame_rate == 25.0
        np.testing.assert_array_equal(b.topology, a.topology)

    def test_obj_export(self, tmp_path):
        frames = np.random.default_rng(0).standard_normal((2, 4, 3))
        AnimationSequence(frames, [[0, 1, 2], [0, 2, 3]], 30.0).export_obj_dir(str(tmp_path / "out"))
        man = json.load(open(tmp_path / "out" / "manifest.json"))
        assert man["count"] == 2 and man["frame_rate"] == 30.0
        m = load_obj(os.path.join(tmp_path, "out", man["frames"][1]))
        np.testing.assert_allclose(m.vertices, frames[1], rtol=1e-8)

    def test_bad_frames(self):
        with pytest.raises(ShapeMismatch):
            AnimationSequence(np.zeros((2, 4)), [[0, 1, 2]])
