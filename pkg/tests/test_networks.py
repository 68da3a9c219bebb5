import numpy as np
import pytest

from wavediffur.data import bicubic_x2
from wavediffur.errors import ParamError, ShapeError
from wavediffur.networks import (
    Condition,
    NetConfig,
    ParamStore,
    backward,
    build_models,
    cross_attention,
    csp_encode,
    cshr_restore,
    denoiser_forward,
    upscale_hf,
)
from wavediffur.wavelet import dwt2

SMALL = NetConfig(heads=4, base_width=8, csp_width=8, emb_dim=8)


def fd_check(loss_fn, params, names, rng, n_probe=6, h=1e-4):
    """Max relative error of analytic vs central-difference gradients
    over randomly probed parameter entries (double precision)."""
    loss = loss_fn()
    backward(loss, params)
    grads = {m: params[m].grad.copy() for m in names}
    worst = 0.0
    for m in names:
        flat = params[m].data.reshape(-1)
        idx = rng.choice(flat.size, size=min(n_probe, flat.size), replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            lp = float(loss_fn().data)
            flat[i] = keep - h
            lm = float(loss_fn().data)
            flat[i] = keep
            fd = (lp - lm) / (2 * h)
            an = float(grads[m].reshape(-1)[i])
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-6))
    return worst


def _f64_randomized(materialize, rng, scale=0.05):
    """Materialize a float32 store, cast to float64, randomize zero heads."""
    ps32 = ParamStore(seed=11)
    materialize(ps32)
    ps = ps32.astype(np.float64)
    for _, p in ps.items():
        if not p.data.any():
            p.data = rng.standard_normal(p.data.shape) * scale
    return ps


# -- ParamStore ------------------------------------------------------------------


def test_param_store_create_and_reuse():
    ps = ParamStore(seed=0)
    w1 = ps.param("w", (3, 4))
    w2 = ps.param("w", (3, 4))
    assert w1 is w2
    assert ps.n_params == 12
    assert w1.grad.shape == (3, 4)  # gradient slot exists


def test_param_store_deterministic_init():
    a = ParamStore(seed=5).param("block.w", (4, 4)).data
    b = ParamStore(seed=5).param("block.w", (4, 4)).data
    c = ParamStore(seed=6).param("block.w", (4, 4)).data
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_param_store_shape_conflict():
    ps = ParamStore(seed=0)
    ps.param("w", (3, 4))
    with pytest.raises(ShapeError, match="w"):
        ps.param("w", (4, 4))


def test_param_store_load_state_diff():
    ps = ParamStore(seed=0)
    ps.param("a", (2, 2))
    ps.param("b", (3,))
    state = ps.state_dict()
    state["c"] = np.zeros((1,), np.float32)
    state["a"] = np.zeros((5, 5), np.float32)
    del state["b"]
    with pytest.raises(ShapeError) as err:
        ps.load_state(state)
    msg = str(err.value)
    assert "b" in msg and "c" in msg and "a" in msg


def test_param_store_load_into_empty():
    ps = ParamStore(seed=0)
    ps.load_state({"x": np.ones((2, 2), np.float32)})
    assert np.array_equal(ps["x"].data, np.ones((2, 2)))
    assert ps["x"].requires_grad


# -- denoiser -----------------------------------------------------------------------


@pytest.mark.parametrize("size", [8, 16, 32, 64])
def test_denoiser_shape_contract(size, rng):
    ps = ParamStore(seed=0)
    x = rng.standard_normal((size, size, 3)).astype(np.float32)
    cond = Condition(lf=rng.standard_normal((size, size, 3)).astype(np.float32))
    out = denoiser_forward(x, 3, cond, ps, SMALL)
    assert out.data.shape == (size, size, 3)


def test_denoiser_zero_init_head(rng):
    ps = ParamStore(seed=0)
    x = rng.standard_normal((16, 16, 2)).astype(np.float32)
    cond = Condition(lf=rng.standard_normal((16, 16, 2)).astype(np.float32))
    out = denoiser_forward(x, 7, cond, ps, SMALL)
    assert np.all(out.data == 0.0)


def test_denoiser_shape_mismatch(rng):
    ps = ParamStore(seed=0)
    with pytest.raises(ShapeError):
        denoiser_forward(
            np.zeros((8, 8, 1), np.float32),
            0,
            Condition(lf=np.zeros((4, 4, 1), np.float32)),
            ps,
            SMALL,
        )


def test_denoiser_deterministic(rng):
    ps = ParamStore(seed=1)
    x = rng.standard_normal((8, 8, 1)).astype(np.float32)
    cond = Condition(lf=rng.standard_normal((8, 8, 1)).astype(np.float32))
    a = denoiser_forward(x, 2, cond, ps, SMALL).data
    b = denoiser_forward(x, 2, cond, ps, SMALL).data
    assert np.array_equal(a, b)


def test_denoiser_gradients(rng):
    x = rng.standard_normal((8, 8, 2))
    cond = rng.standard_normal((8, 8, 2))
    w = rng.standard_normal((8, 8, 2))
    ps = _f64_randomized(
        lambda s: denoiser_forward(x, 4, Condition(lf=cond), s, SMALL), rng
    )
    f = lambda: (denoiser_forward(x, 4, Condition(lf=cond), ps, SMALL) * w).sum()
    assert fd_check(f, ps, ps.names(), rng, n_probe=3) < 1e-4


# -- cross attention -------------------------------------------------------------------


def _identity_attention_params(c):
    ps = ParamStore(seed=0)
    eye = np.eye(c, dtype=np.float32)
    for name in ("wq", "wk", "wv", "wo"):
        ps.param(f"xattn.{name}", (c, c))
        ps[f"xattn.{name}"].data = eye.copy()
    return ps


def test_attention_rows_convex_combination(rng):
    c = 4
    ps = _identity_attention_params(c)
    q = rng.standard_normal((3, 2, c)).astype(np.float32)
    out = cross_attention(q, q, heads=2, params=ps)
    v = q.reshape(-1, c)
    lo, hi = v.min(axis=0), v.max(axis=0)
    flat = out.data.reshape(-1, c)
    assert np.all(flat >= lo - 1e-5) and np.all(flat <= hi + 1e-5)


def test_attention_single_token(rng):
    c = 4
    ps = _identity_attention_params(c)
    tok = rng.standard_normal((1, 1, c)).astype(np.float32)
    out = cross_attention(tok, tok, heads=1, params=ps)
    assert np.allclose(out.data, tok, atol=1e-6)  # softmax of one logit is 1


def test_attention_two_token_closed_form():
    c = 2
    ps = _identity_attention_params(c)
    q = np.array([[1.0, 0.0]], np.float32)  # one query token
    kv = np.array([[1.0, 0.0], [0.0, 1.0]], np.float32)  # two kv tokens
    out = cross_attention(q, kv, heads=1, params=ps).data
    # logits = [1,0]/sqrt(2); softmax -> closed-form mixture of V rows
    l0, l1 = 1 / np.sqrt(2), 0.0
    w0 = np.exp(l0) / (np.exp(l0) + np.exp(l1))
    want = w0 * kv[0] + (1 - w0) * kv[1]
    assert np.allclose(out[0], want, atol=1e-6)


def test_attention_head_divisibility():
    ps = ParamStore(seed=0)
    with pytest.raises(ParamError):
        cross_attention(np.zeros((2, 2, 6), np.float32), np.zeros((2, 2, 6), np.float32), 4, ps)


def test_attention_gradients(rng):
    q = rng.standard_normal((2, 2, 8))
    kv = rng.standard_normal((2, 2, 8))
    w = rng.standard_normal((2, 2, 8))
    ps32 = ParamStore(seed=2)
    cross_attention(q, kv, 4, ps32)
    ps = ps32.astype(np.float64)
    f = lambda: (cross_attention(q, kv, 4, ps) * w).sum()
    assert fd_check(f, ps, ps.names(), rng) < 1e-4


# -- csp encoder ------------------------------------------------------------------------


def test_csp_output_shapes(rng):
    ps = ParamStore(seed=0)
    lr = rng.uniform(0, 1, (16, 16, 3)).astype(np.float32)
    ref = rng.uniform(0, 1, (24, 24, 3)).astype(np.float32)
    cond = csp_encode(lr, ref, ps, SMALL)
    assert cond.lf.data.shape == (16, 16, 3)  # target LF band shape for the x2 step
    assert all(b.data.shape == (16, 16, 3) for b in cond.hf)


def test_csp_deterministic(rng):
    ps = ParamStore(seed=0)
    lr = rng.uniform(0, 1, (8, 8, 1)).astype(np.float32)
    ref = rng.uniform(0, 1, (12, 12, 1)).astype(np.float32)
    a = csp_encode(lr, ref, ps, SMALL)
    b = csp_encode(lr, ref, ps, SMALL)
    assert np.array_equal(a.lf.data, b.lf.data)
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a.hf, b.hf))


def test_csp_ref_smaller_rejected(rng):
    ps = ParamStore(seed=0)
    with pytest.raises(ParamError):
        csp_encode(
            np.zeros((16, 16, 1), np.float32), np.zeros((8, 8, 1), np.float32), ps, SMALL
        )


def test_csp_zero_init_equals_bicubic_condition(rng):
    ps = ParamStore(seed=0)
    lr = rng.uniform(0, 1, (8, 8, 2)).astype(np.float32)
    ref = rng.uniform(0, 1, (12, 12, 2)).astype(np.float32)
    cond = csp_encode(lr, ref, ps, SMALL)
    base = dwt2(bicubic_x2(lr))
    assert np.allclose(cond.lf.data, base.a, atol=1e-6)
    for got, want in zip(cond.hf, base.detail()):
        assert np.allclose(got.data, want, atol=1e-6)


def test_csp_gradients(rng):
    lr = rng.standard_normal((8, 8, 2))
    ref = rng.standard_normal((12, 12, 2))
    w = rng.standard_normal((8, 8, 2))
    ps = _f64_randomized(lambda s: csp_encode(lr, ref, s, SMALL), rng)

    def f():
        cond = csp_encode(lr, ref, ps, SMALL)
        return (cond.lf * w).sum() + (cond.hf[0] * w).sum() + (cond.hf[2] * w).sum()

    assert fd_check(f, ps, ps.names(), rng, n_probe=3) < 1e-4


# -- cshr ---------------------------------------------------------------------------------


def test_cshr_upscales_2x(rng):
    ps = ParamStore(seed=0)
    vhd = tuple(rng.standard_normal((4, 4, 3)).astype(np.float32) for _ in range(3))
    cond = tuple(rng.standard_normal((8, 8, 3)).astype(np.float32) for _ in range(3))
    out = cshr_restore(vhd, cond, ps, SMALL)
    assert all(b.data.shape == (8, 8, 3) for b in out)


def test_cshr_zero_init_head(rng):
    ps = ParamStore(seed=0)
    vhd = tuple(rng.standard_normal((4, 4, 1)).astype(np.float32) for _ in range(3))
    cond = tuple(rng.standard_normal((8, 8, 1)).astype(np.float32) for _ in range(3))
    out = cshr_restore(vhd, cond, ps, SMALL)
    assert all(np.all(b.data == 0.0) for b in out)


def test_cshr_shape_errors(rng):
    ps = ParamStore(seed=0)
    vhd = tuple(np.zeros((4, 4, 1), np.float32) for _ in range(3))
    bad_cond = tuple(np.zeros((4, 4, 1), np.float32) for _ in range(3))
    with pytest.raises(ShapeError):
        cshr_restore(vhd, bad_cond, ps, SMALL)
    mixed = (np.zeros((4, 4, 1), np.float32), np.zeros((2, 2, 1), np.float32), np.zeros((4, 4, 1), np.float32))
    with pytest.raises(ShapeError):
        cshr_restore(mixed, tuple(np.zeros((8, 8, 1), np.float32) for _ in range(3)), ps, SMALL)


def test_cshr_gradients(rng):
    vhd = tuple(rng.standard_normal((4, 4, 2)) for _ in range(3))
    cond = tuple(rng.standard_normal((8, 8, 2)) for _ in range(3))
    w = rng.standard_normal((8, 8, 2))
    ps = _f64_randomized(lambda s: cshr_restore(vhd, cond, s, SMALL), rng)

    def f():
        o = cshr_restore(vhd, cond, ps, SMALL)
        return (o[0] * w).sum() + (o[1] * w).sum() + (o[2] * w).sum()

    assert fd_check(f, ps, ps.names(), rng, n_probe=3) < 1e-4


# -- upscale_hf -------------------------------------------------------------------------------


def test_upscale_hf_constant_bands():
    vhd = tuple(np.full((4, 4, 1), v, np.float32) for v in (0.3, -0.2, 0.05))
    out = upscale_hf(vhd)
    for got, v in zip(out, (0.3, -0.2, 0.05)):
        assert got.shape == (8, 8, 1)
        assert np.allclose(got, v, atol=1e-6)


def test_upscale_hf_deterministic_at_zero_sigma(rng):
    vhd = tuple(rng.standard_normal((4, 4, 2)).astype(np.float32) for _ in range(3))
    a = upscale_hf(vhd)
    b = upscale_hf(vhd)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_upscale_hf_linear_ramp():
    ramp = np.linspace(-1, 1, 8, dtype=np.float32)
    band = np.broadcast_to(ramp[:, None, None], (8, 8, 1)).astype(np.float32)
    up = upscale_hf((band, band, band))[0]
    want = np.interp((np.arange(16) + 0.5) / 2 - 0.5, np.arange(8), ramp)
    # kernel support needs src-1 .. src+2 unclamped: output rows 3..10
    err = np.abs(up[3:11, 4, 0] - want[3:11].astype(np.float32))
    assert err.max() < 1e-3


def test_upscale_hf_sigma_perturbs(rng):
    vhd = tuple(np.zeros((4, 4, 1), np.float32) for _ in range(3))
    out = upscale_hf(vhd, sigma=0.5, rng=np.random.default_rng(0))
    assert any(np.abs(b).max() > 0 for b in out)


# -- whole-bundle materialization ---------------------------------------------------------------


def test_build_models_materializes_everything():
    models = build_models(3, SMALL, seed=0)
    names = models.params.names()
    assert any(n.startswith("den.") for n in names)
    assert any(n.startswith("csp.") for n in names)
    assert any(n.startswith("cshr.") for n in names)
    assert len(set(names)) == len(names)
