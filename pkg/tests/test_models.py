import numpy as np
import pytest

from touchmpc import sim
from touchmpc.config import EnvConfig
from touchmpc.errors import (DimensionError, HorizonError, InvalidInputError,
                             MagicError, TruncatedError, VersionError)
from touchmpc.models import (CONTEXT_FRAMES, LearnedPredictor, ModelConfig,
                             OraclePredictor, PersistencePredictor,
                             PredictionRequest, oracle_predict, padded_context)


def make_request(rng, shape=(6, 8, 3), horizon=3, sim_state=None):
    return PredictionRequest(
        context_images=rng.uniform(0, 1, (CONTEXT_FRAMES,) + shape),
        context_actions=rng.uniform(-6, 6, (CONTEXT_FRAMES - 1, 3)),
        future_actions=rng.uniform(-6, 6, (horizon, 3)),
        sim_state=sim_state)


class TestPredictionRequest:
    def test_validates_shapes(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DimensionError):
            PredictionRequest(rng.uniform(0, 1, (2, 6, 8, 3)),
                              np.zeros((2, 3)), np.zeros((3, 3)))
        with pytest.raises(DimensionError):
            PredictionRequest(rng.uniform(0, 1, (3, 6, 8, 3)),
                              np.zeros((1, 3)), np.zeros((3, 3)))
        with pytest.raises(DimensionError):
            PredictionRequest(rng.uniform(0, 1, (3, 6, 8, 3)),
                              np.zeros((2, 3)), np.zeros((0, 3)))

    def test_padded_context_repeats_first_frame(self):
        rng = np.random.default_rng(1)
        obs = [rng.uniform(0, 1, (4, 4, 1)).astype(np.float32)]
        imgs, acts = padded_context(obs, [])
        assert imgs.shape == (3, 4, 4, 1)
        np.testing.assert_array_equal(imgs[0], obs[0])
        np.testing.assert_array_equal(imgs[2], obs[0])
        np.testing.assert_array_equal(acts, np.zeros((2, 3)))

    def test_padded_context_takes_last_frames(self):
        rng = np.random.default_rng(2)
        obs = [rng.uniform(0, 1, (4, 4, 1)).astype(np.float32) for _ in range(5)]
        acts = [rng.uniform(-6, 6, 3) for _ in range(4)]
        imgs, ctx_acts = padded_context(obs, acts)
        np.testing.assert_array_equal(imgs[0], obs[2])
        np.testing.assert_array_equal(imgs[2], obs[4])
        np.testing.assert_array_equal(ctx_acts[0], acts[2])
        np.testing.assert_array_equal(ctx_acts[1], acts[3])

    def test_mismatched_history_rejected(self):
        rng = np.random.default_rng(3)
        obs = [rng.uniform(0, 1, (4, 4, 1)) for _ in range(3)]
        with pytest.raises(InvalidInputError):
            padded_context(obs, [np.zeros(3)] * 3)


class TestOraclePredictor:
    def test_matches_environment_exactly(self):
        cfg = EnvConfig(task="ball", noise_std=0.0)
        state, obs = sim.reset(cfg, 12)
        rng = np.random.default_rng(0)
        actions = rng.uniform(-6, 6, (6, 3))
        req = PredictionRequest(np.stack([obs] * 3), np.zeros((2, 3)), actions,
                                sim_state=state)
        preds = OraclePredictor(cfg).predict(req)
        cur = state
        for t, a in enumerate(actions):
            cur, img = sim.step(cfg, cur, a, noise=False)
            np.testing.assert_array_equal(preds[t], img)
        # snapshot untouched by prediction
        assert state.same_as(req.sim_state)

    def test_static_scene_zero_actions_stays_background(self):
        cfg = EnvConfig(task="stick", noise_std=0.0)
        state, obs = sim.reset(cfg, 3)
        req = PredictionRequest(np.stack([obs] * 3), np.zeros((2, 3)),
                                np.zeros((5, 3)), sim_state=state)
        preds = OraclePredictor(cfg).predict(req)
        bg = sim.background_image(cfg)
        for frame in preds:
            np.testing.assert_array_equal(frame, bg)

    def test_horizon_cap(self):
        cfg = EnvConfig(task="ball")
        state, obs = sim.reset(cfg, 0)
        req = PredictionRequest(np.stack([obs] * 3), np.zeros((2, 3)),
                                np.zeros((30, 3)), sim_state=state)
        with pytest.raises(HorizonError):
            OraclePredictor(cfg, max_horizon=18).predict(req)

    def test_missing_state_rejected(self):
        cfg = EnvConfig(task="ball")
        rng = np.random.default_rng(0)
        req = make_request(rng, shape=cfg.image_shape)
        with pytest.raises(InvalidInputError):
            OraclePredictor(cfg).predict(req)

    def test_predict_many_matches_predict(self):
        cfg = EnvConfig(task="ball", noise_std=0.0)
        state, obs = sim.reset(cfg, 8)
        rng = np.random.default_rng(1)
        batch = rng.uniform(-6, 6, (7, 4, 3))
        req = PredictionRequest(np.stack([obs] * 3), np.zeros((2, 3)),
                                batch[0], sim_state=state)
        many = OraclePredictor(cfg).predict_many(req, batch)
        for i in range(len(batch)):
            req_i = PredictionRequest(req.context_images, req.context_actions,
                                      batch[i], sim_state=state)
            np.testing.assert_array_equal(many[i], OraclePredictor(cfg).predict(req_i))

    def test_oracle_predict_function_matches_class(self):
        cfg = EnvConfig(task="die", noise_std=0.0)
        state, obs = sim.reset(cfg, 2)
        rng = np.random.default_rng(3)
        actions = rng.uniform(-6, 6, (5, 3))
        req = PredictionRequest(np.stack([obs] * 3), np.zeros((2, 3)), actions,
                                sim_state=state)
        np.testing.assert_array_equal(oracle_predict(cfg, state, actions),
                                      OraclePredictor(cfg).predict(req))
        with pytest.raises(HorizonError):
            oracle_predict(cfg, state, np.zeros((25, 3)))


class TestPersistencePredictor:
    def test_repeats_last_context_frame(self):
        rng = np.random.default_rng(4)
        req = make_request(rng, horizon=5)
        preds = PersistencePredictor().predict(req)
        assert preds.shape[0] == 5
        for frame in preds:
            np.testing.assert_array_equal(frame, req.context_images[-1])


def naive_forward_one_step(params, cfg, ctx_images, ctx_actions, action):
    """Loop-based reimplementation of the full forward pass, one future step.

    Written independently of the package's conv engine: explicit replicate
    padding, explicit window loops, explicit gate arithmetic.
    """
    def pad_replicate(x, pt, pb, pl, pr):
        h, w, c = x.shape
        out = np.zeros((h + pt + pb, w + pl + pr, c))
        for i in range(out.shape[0]):
            for j in range(out.shape[1]):
                out[i, j] = x[min(max(i - pt, 0), h - 1), min(max(j - pl, 0), w - 1)]
        return out

    def conv(x, w, b, stride):
        kh, kw, cin, cout = w.shape
        ho = -(-x.shape[0] // stride)
        wo = -(-x.shape[1] // stride)
        pt = kh // 2
        pb = max(0, (ho - 1) * stride + kh // 2 - (x.shape[0] - 1))
        pl = kw // 2
        pr = max(0, (wo - 1) * stride + kw // 2 - (x.shape[1] - 1))
        xp = pad_replicate(x, pt, pb, pl, pr)
        y = np.zeros((ho, wo, cout))
        for i in range(ho):
            for j in range(wo):
                patch = xp[i * stride:i * stride + kh, j * stride:j * stride + kw]
                for f in range(cout):
                    y[i, j, f] = np.sum(patch * w[:, :, :, f]) + b[f]
        return y

    def sigmoid(x):
        return 1.0 / (1.0 + np.exp(-x))

    def softmax(x):
        e = np.exp(x - x.max())
        return e / e.sum()

    background = ctx_images[0]
    h_state = None
    xs = [ctx_images[0], ctx_images[1], ctx_images[2]]
    acts = [ctx_actions[0], ctx_actions[1], action]
    out = None
    for step_i in range(3):
        x_img = xs[step_i]
        a = np.asarray(acts[step_i]) / 6.0
        tile = np.broadcast_to(a, x_img.shape[:2] + (3,))
        inp = np.concatenate([x_img, tile], axis=-1)
        r1 = np.maximum(conv(inp, params["w1"], params["b1"], 2), 0.0)
        r2 = np.maximum(conv(r1, params["w2"], params["b2"], 2), 0.0)
        if h_state is None:
            h_state = np.zeros(r2.shape[:2] + (params["bz"].shape[0],))
        xh = np.concatenate([r2, h_state], axis=-1)
        z = sigmoid(conv(xh, params["wz"], params["bz"], 1))
        r = sigmoid(conv(xh, params["wr"], params["br"], 1))
        xrh = np.concatenate([r2, r * h_state], axis=-1)
        hc = np.tanh(conv(xrh, params["wc"], params["bc"], 1))
        h_state = (1.0 - z) * h_state + z * hc
        if step_i < 2:
            continue
        gap = h_state.mean(axis=(0, 1))
        klog = gap @ params["wk"] + params["bk"]
        ks = cfg.kernel_size
        kernels = np.stack([softmax(klog[k * ks * ks:(k + 1) * ks * ks]).reshape(ks, ks)
                            for k in range(cfg.n_kernels)])
        mlog = conv(h_state, params["wm"], params["bm"], 1)
        msmall = np.zeros_like(mlog)
        for i in range(mlog.shape[0]):
            for j in range(mlog.shape[1]):
                msmall[i, j] = softmax(mlog[i, j])
        hh, ww = x_img.shape[:2]
        ri = (np.arange(hh) * msmall.shape[0]) // hh
        ci = (np.arange(ww) * msmall.shape[1]) // ww
        masks = msmall[ri][:, ci]
        pad = ks // 2
        xp = pad_replicate(x_img, pad, pad, pad, pad)
        out = np.zeros_like(x_img)
        for i in range(hh):
            for j in range(ww):
                patch = xp[i:i + ks, j:j + ks]
                for k in range(cfg.n_kernels):
                    cand = np.tensordot(kernels[k], patch, axes=([0, 1], [0, 1]))
                    out[i, j] += masks[i, j, k] * cand
                out[i, j] += masks[i, j, cfg.n_kernels] * background[i, j]
    return out


class TestLearnedPredictor:
    def test_identity_init_zero_actions_holds_last_frame(self):
        cfg = EnvConfig(task="ball", noise_std=0.0)
        mcfg = ModelConfig(image_shape=cfg.image_shape)
        model = LearnedPredictor.create(mcfg, seed=0, kernel_bias=60.0)
        state = sim.SimState("ball", np.array([0.0, 0.0, 5.0]),
                             np.zeros(2), 0, np.random.default_rng(0))
        frame = sim.render_imprint(cfg, state)
        req = PredictionRequest(np.stack([frame] * 3), np.zeros((2, 3)),
                                np.zeros((8, 3)))
        preds = model.predict(req)
        for out in preds:
            np.testing.assert_allclose(out, frame, atol=1e-6)

    def test_forward_matches_naive_oracle(self):
        mcfg = ModelConfig(image_shape=(4, 4, 3), n_kernels=2, kernel_size=3,
                           enc1=3, enc2=4, hidden=3)
        model = LearnedPredictor.create(mcfg, seed=7)
        rng = np.random.default_rng(11)
        ctx = rng.uniform(0, 1, (3, 4, 4, 3))
        ctx_acts = rng.uniform(-6, 6, (2, 3))
        action = rng.uniform(-6, 6, 3)
        req = PredictionRequest(ctx, ctx_acts, action[None])
        got = model.predict(req)[0]
        params64 = {k: v.astype(np.float64) for k, v in model.params.items()}
        expected = naive_forward_one_step(params64, mcfg,
                                          ctx.astype(np.float64), ctx_acts, action)
        np.testing.assert_allclose(got, expected, atol=1e-5)

    def test_outputs_are_valid_images(self):
        mcfg = ModelConfig(image_shape=(6, 8, 3))
        model = LearnedPredictor.create(mcfg, seed=1)
        rng = np.random.default_rng(5)
        preds = model.predict(make_request(rng, horizon=6))
        assert preds.shape == (6, 6, 8, 3)
        assert np.all(np.isfinite(preds))
        assert preds.min() >= 0.0 and preds.max() <= 1.0

    def test_predict_many_matches_tiled_predict(self):
        mcfg = ModelConfig(image_shape=(6, 8, 3))
        model = LearnedPredictor.create(mcfg, seed=2)
        rng = np.random.default_rng(6)
        req = make_request(rng, horizon=4)
        batch = rng.uniform(-6, 6, (5, 4, 3))
        many = model.predict_many(req, batch)
        for i in range(5):
            req_i = PredictionRequest(req.context_images, req.context_actions,
                                      batch[i])
            # batched einsum may contract in a different order, so agreement
            # is up to float32 rounding rather than bitwise
            np.testing.assert_allclose(many[i], model.predict(req_i), atol=2e-6)

    def test_shape_mismatch_rejected(self):
        mcfg = ModelConfig(image_shape=(6, 8, 3))
        model = LearnedPredictor.create(mcfg, seed=0)
        rng = np.random.default_rng(0)
        with pytest.raises(DimensionError):
            model.predict(make_request(rng, shape=(8, 8, 3)))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        mcfg = ModelConfig(image_shape=(6, 8, 3))
        model = LearnedPredictor.create(mcfg, seed=3)
        path = tmp_path / "model.tmpm"
        model.save(path)
        loaded = LearnedPredictor.load(path)
        assert loaded.cfg == mcfg
        for name in model.params:
            np.testing.assert_array_equal(model.params[name], loaded.params[name])
        path2 = tmp_path / "model2.tmpm"
        loaded.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_bad_magic(self, tmp_path):
        mcfg = ModelConfig(image_shape=(6, 8, 3))
        model = LearnedPredictor.create(mcfg, seed=0)
        path = tmp_path / "m.tmpm"
        model.save(path)
        blob = bytearray(path.read_bytes())
        blob[1] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(MagicError):
            LearnedPredictor.load(path)

    def test_bad_version(self, tmp_path):
        mcfg = ModelConfig(image_shape=(6, 8, 3))
        model = LearnedPredictor.create(mcfg, seed=0)
        path = tmp_path / "m.tmpm"
        model.save(path)
        blob = bytearray(path.read_bytes())
        blob[4] = 9
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionError):
            LearnedPredictor.load(path)

    def test_truncation(self, tmp_path):
        mcfg = ModelConfig(image_shape=(6, 8, 3))
        model = LearnedPredictor.create(mcfg, seed=0)
        path = tmp_path / "m.tmpm"
        model.save(path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(TruncatedError):
            LearnedPredictor.load(path)
