import numpy as np
import pytest
import torch

from fieldbounds.errors import ConfigError, DimensionError, FormatError, TrainingError, WeightError
from fieldbounds.loss_metrics import MultitaskPrediction
from fieldbounds.nnblocks import (
    FusionConfig, ModelWeights, StageConfig, UNet3DConfig, config_from_dict, config_to_dict,
    fit_toy, fusion_forward, init_weights, loss_and_grad, param_specs, stage_forward, toy_config,
    total_loss, unet3d_forward,
)
from fieldbounds.nnblocks.layers import loss_fn, patch_attention
from fieldbounds.pta3d import AttentionConfig
from fieldbounds.tensor_core import PatchSpec

from oracles import central_difference

SMALL = PatchSpec(2, 2, 2)


def _in_unit(pred):
    return all(a.min() >= 0 and a.max() <= 1 and np.isfinite(a).all() for a in pred.layers())


@pytest.mark.parametrize("T,channels,repeats", [(1, 4, 1), (3, 6, 2), (5, 2, 1)])
def test_stage_preserves_time(rng, T, channels, repeats):
    cfg = StageConfig(repeats, channels, SMALL)
    x = rng.normal(size=(channels, T, 8, 8))
    y = stage_forward(x, cfg, init_weights(cfg, 1))
    assert y.shape == x.shape


def test_identity_residual_stage(rng):
    cfg = StageConfig(1, 4, SMALL)
    x = rng.normal(size=(4, 3, 8, 8))
    y = stage_forward(x, cfg, init_weights(cfg, 5, identity_residual=True))
    assert y.tobytes() == x.tobytes()


def test_stage_deterministic(rng):
    cfg = StageConfig(2, 4, SMALL, causal=True)
    x = rng.normal(size=(4, 3, 8, 8))
    a = stage_forward(x, cfg, init_weights(cfg, 3))
    b = stage_forward(x, cfg, init_weights(cfg, 3))
    assert a.tobytes() == b.tobytes()


def test_stage_config_validation():
    with pytest.raises(ConfigError):
        StageConfig(1, 5, SMALL)
    with pytest.raises(ConfigError):
        StageConfig(0, 4, SMALL)


def test_stage_weight_mismatch(rng):
    cfg = StageConfig(1, 4, SMALL)
    w = init_weights(StageConfig(1, 6, SMALL), 0)
    with pytest.raises(WeightError):
        stage_forward(rng.normal(size=(4, 2, 8, 8)), cfg, w)


@pytest.mark.parametrize("repeats", [(2, 2), (1, 2, 3), (2, 1, 3, 2, 2)])
def test_unet_config_rejects_asymmetry(repeats):
    with pytest.raises(ConfigError):
        UNet3DConfig(stage_repeats=repeats)


def test_unet_default_is_tiny():
    cfg = UNet3DConfig()
    assert cfg.stage_repeats == (2, 2, 5, 2, 5, 2, 2) and cfg.depth == 3 and cfg.init_features == 16


def test_unet_tiny_forward_contract(rng):
    cfg = UNet3DConfig(in_channels=4)
    pred = unet3d_forward(rng.normal(size=(4, 4, 64, 64)), cfg, init_weights(cfg, 0))
    assert pred.shape == (64, 64)
    assert _in_unit(pred)


def test_unet_spatial_divisibility(rng):
    cfg = UNet3DConfig(in_channels=2, init_features=4, stage_repeats=(1, 1, 1))
    w = init_weights(cfg, 0)
    with pytest.raises(DimensionError):
        unet3d_forward(rng.normal(size=(2, 2, 36, 32)), cfg, w)
    with pytest.raises(DimensionError):
        unet3d_forward(rng.normal(size=(3, 2, 32, 32)), cfg, w)


def test_unet_time_agnostic_parameters():
    cfg = UNet3DConfig(in_channels=3, init_features=4, stage_repeats=(1, 1, 1))
    w = init_weights(cfg, 0)
    for T in (4, 8):
        pred = unet3d_forward(np.ones((3, T, 16, 16)) * np.arange(16), cfg, w)
        assert pred.shape == (16, 16)
    # the manifest does not depend on T at all, so both runs used one parameter set
    assert [e.shape for e in w.manifest] == [s.shape for s in param_specs(cfg)]


def test_parameter_count_scaling():
    small = init_weights(UNet3DConfig(init_features=8, stage_repeats=(1, 2, 1)), 0)
    large = init_weights(UNet3DConfig(init_features=16, stage_repeats=(1, 2, 1)), 0)
    assert small.names() == large.names()
    for e_s, e_l in zip(small.manifest, large.manifest):
        name = e_s.name
        fixed_io = name.startswith(("stem.", "head.")) or ".dw." in name
        if name.endswith(".w") and len(e_s.shape) >= 2 and not fixed_io:
            assert np.prod(e_l.shape) == 4 * np.prod(e_s.shape), name
        elif name.endswith(".b") and not name.startswith("head."):
            assert np.prod(e_l.shape) == 2 * np.prod(e_s.shape), name


def test_constant_input_gives_constant_maps():
    cfg = UNet3DConfig(in_channels=4, init_features=4, stage_repeats=(1, 1, 1))
    x = np.broadcast_to(np.array([0.3, -1.2, 2.0, 0.7])[:, None, None, None], (4, 3, 32, 32))
    x = x * np.array([1.0, 0.5, -0.2])[None, :, None, None]
    pred = unet3d_forward(x, cfg, init_weights(cfg, 9))
    for layer in pred.layers():
        assert np.ptp(layer) <= 1e-12


def test_output_range_extreme(rng):
    cfg = UNet3DConfig(in_channels=2, init_features=4, stage_repeats=(1,))
    w = init_weights(cfg, 2)
    big = w.replace({n: 25.0 * t for n, t in w.tensors.items()})
    pred = unet3d_forward(1e3 * rng.normal(size=(2, 2, 16, 16)), cfg, big)
    assert _in_unit(pred)


def test_conv_time_compaction(rng):
    cfg = UNet3DConfig(in_channels=2, init_features=4, stage_repeats=(1,), time_compaction="conv", time_steps=3)
    w = init_weights(cfg, 0)
    assert w["compact.w"].shape == (4, 4, 3, 1, 1)
    assert _in_unit(unet3d_forward(rng.normal(size=(2, 3, 16, 16)), cfg, w))
    with pytest.raises(DimensionError):
        unet3d_forward(rng.normal(size=(2, 4, 16, 16)), cfg, w)
    with pytest.raises(ConfigError):
        UNet3DConfig(time_compaction="conv")


def test_init_seeds_and_roundtrip(tmp_path):
    cfg = UNet3DConfig(in_channels=2, init_features=4, stage_repeats=(1, 1, 1))
    a, b, c = init_weights(cfg, 4), init_weights(cfg, 4), init_weights(cfg, 5)
    assert a.manifest == b.manifest
    assert all(a[n].tobytes() == b[n].tobytes() for n in a.names())
    assert any(a[n].tobytes() != c[n].tobytes() for n in a.names())
    path = tmp_path / "m.weights"
    a.save(path)
    r = ModelWeights.load(path)
    assert r.manifest == a.manifest
    assert all(r[n].tobytes() == a[n].tobytes() for n in a.names())
    assert r.to_bytes() == path.read_bytes()


def test_weights_file_errors(tmp_path):
    cfg = StageConfig(1, 2, SMALL)
    data = init_weights(cfg, 0).to_bytes()
    with pytest.raises(FormatError):
        ModelWeights.from_bytes(data[:-8])
    with pytest.raises(FormatError):
        ModelWeights.from_bytes(b"garbage")
    w = ModelWeights.from_bytes(data)
    with pytest.raises(WeightError):
        w["nope"]


def test_config_dict_roundtrip():
    for cfg in (UNet3DConfig(in_channels=3, stage_repeats=(1, 2, 1)), FusionConfig(init_features=8)):
        assert config_from_dict(config_to_dict(cfg)) == cfg
    with pytest.raises(ConfigError):
        config_from_dict({"kind": "unet3d", "bogus": 1})


# --- fusion -----------------------------------------------------------------

@pytest.fixture(scope="module")
def fusion_setup():
    cfg = FusionConfig(init_features=8)
    return cfg, init_weights(cfg, 11)


def test_fusion_mixed_lengths(rng, fusion_setup):
    cfg, w = fusion_setup
    s2 = rng.normal(size=(4, 4, 64, 64))
    s1 = rng.normal(size=(5, 16, 64, 64))
    pred = fusion_forward(s2, s1, cfg, w)
    assert pred.shape == (64, 64) and _in_unit(pred)
    again = fusion_forward(s2, s1, cfg, w)
    assert pred.stack().tobytes() == again.stack().tobytes()
    assert _in_unit(fusion_forward(s2, np.zeros_like(s1), cfg, w))


def test_fusion_independent_encoders(fusion_setup):
    _, w = fusion_setup
    s2 = [n for n in w.names() if n.startswith("s2.")]
    assert s2 and all(n.replace("s2.", "s1.", 1) in w for n in s2 if "stem" not in n)
    assert any(w[n].tobytes() != w[n.replace("s2.", "s1.", 1)].tobytes() for n in s2 if "stem" not in n)


def test_fusion_spatial_mismatch(rng, fusion_setup):
    cfg, w = fusion_setup
    with pytest.raises(DimensionError):
        fusion_forward(rng.normal(size=(4, 2, 64, 64)), rng.normal(size=(5, 2, 32, 32)), cfg, w)


# --- autograd bridges and training -------------------------------------------

def test_attention_bridge_gradcheck(rng):
    cfg = AttentionConfig(PatchSpec(1, 2, 2), causal=True)
    args = [torch.tensor(rng.uniform(0.1, 1, size=(2, 2, 4, 4)), requires_grad=True) for _ in range(3)]
    assert torch.autograd.gradcheck(lambda q, k, v: patch_attention(q, k, v, cfg), args)


def test_loss_bridge_gradcheck(rng):
    gt = MultitaskPrediction(*(rng.uniform(size=(5, 6)) for _ in range(3)))
    p = torch.tensor(rng.uniform(0.05, 0.95, size=(3, 5, 6)), requires_grad=True)
    assert torch.autograd.gradcheck(lambda t: loss_fn(t, gt), [p])


def _tiny_task(seed=0, H=16):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 2, H, H))
    gt = MultitaskPrediction((x[0, 0] > 0).astype(float), (np.abs(x[1, 0]) < 0.3).astype(float),
                             rng.uniform(size=(H, H)))
    return [(x, gt)]


def test_lr_zero_constant_trace():
    cfg = toy_config(in_channels=2, features=4)
    _, trace = fit_toy(cfg, _tiny_task(), steps=3, lr=0.0)
    assert len(trace) == 4 and len(set(trace)) == 1


def test_fit_toy_reduces_loss_briefly():
    cfg = toy_config(in_channels=2, features=4)
    _, trace = fit_toy(cfg, _tiny_task(), steps=5, lr=0.5)
    assert trace[-1] < trace[0]


def test_fit_toy_detects_divergence():
    cfg = toy_config(in_channels=2, features=4)
    w = init_weights(cfg, 0)
    bad = w.replace({"stem.w": np.full_like(w["stem.w"], np.nan)})
    with pytest.raises(TrainingError):
        fit_toy(cfg, _tiny_task(), steps=2, lr=0.1, weights=bad)


def test_fit_toy_rejects_large_model():
    with pytest.raises(ConfigError):
        fit_toy(UNet3DConfig(in_channels=2, init_features=4, stage_repeats=(1, 1, 1)), _tiny_task(), 1, 0.1)


def test_gradient_probe_finite_differences():
    cfg = toy_config(in_channels=2, features=4)
    data = _tiny_task(3)
    w = init_weights(cfg, 7)
    _, grads = loss_and_grad(cfg, w, data)
    probes = ["stem.w", "enc0.rep0.mb.expand.w", "enc0.rep0.mb.dw.w", "enc0.rep0.se.reduce.w",
              "enc0.rep0.att.q.w", "enc0.rep0.att.k.w", "enc0.rep0.att.v.w", "enc0.rep0.ffn.fc1.w",
              "final.rep0.att.norm.g", "head.b.w"]
    worst = 0.0
    for name in probes:
        idx = int(np.argmax(np.abs(grads[name])))

        def f(t, name=name):
            return total_loss(cfg, w.replace({name: t}), data)

        fd = central_difference(f, w[name], eps=1e-5, indices=[idx])[idx]
        g = grads[name].ravel()[idx]
        worst = max(worst, abs(fd - g) / max(abs(fd), abs(g)))
    assert worst <= 1e-3


from hypothesis import given, settings  # noqa: E402
from hypothesis import strategies as st  # noqa: E402


@settings(max_examples=12, deadline=None)
@given(st.integers(1, 5), st.sampled_from([2, 4, 6]), st.booleans(), st.integers(0, 2**31))
def test_stage_time_preservation_property(T, channels, causal, seed):
    cfg = StageConfig(1, channels, SMALL, causal)
    x = np.random.default_rng(seed).normal(size=(channels, T, 4, 6))
    y = stage_forward(x, cfg, init_weights(cfg, seed))
    assert y.shape == x.shape and np.isfinite(y).all()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.floats(-50, 50))
def test_head_range_property(seed, shift):
    cfg = toy_config(in_channels=2, features=2, patch=PatchSpec(1, 2, 2))
    x = np.random.default_rng(seed).normal(size=(2, 2, 8, 8)) + shift
    assert _in_unit(unet3d_forward(x, cfg, init_weights(cfg, seed)))
