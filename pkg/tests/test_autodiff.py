"""Reverse-mode engine: worked examples, finite-difference checks, backends."""
import numpy as np
import pytest

from dartk import autodiff as ad
from dartk.autodiff import kernels
from dartk.errors import DegenerateBatch, NonScalarLoss, ShapeMismatch

from oracles import naive_batchnorm, naive_conv1d, numeric_grad

N_SHAPES = 20


def T(a, grad=False):
    return ad.Tensor(np.asarray(a, dtype=np.float64), grad, dtype=np.float64)


def grad_check(build, arrays, rng, mask=None, rtol=1e-4, atol=1e-7):
    """Compare tape gradients of sum(build(*arrays) * R) with central differences.

    ``mask(arrays)`` may return per-array boolean masks of elements to skip
    (kink neighbourhoods).
    """
    probe = build(*[T(a) for a in arrays]).value
    weights = rng.standard_normal(probe.shape)

    def loss_value(arrs):
        return float((build(*[T(a) for a in arrs]).value * weights).sum())

    leaves = [T(a, True) for a in arrays]
    with ad.Tape() as tape:
        out = build(*leaves)
        loss = ad.sum(ad.mul(out, T(weights)))
        tape.backward(loss)
    skips = mask(arrays) if mask is not None else [None] * len(arrays)
    for i, leaf in enumerate(leaves):
        def f(a, i=i):
            arrs = list(arrays)
            arrs[i] = a
            return loss_value(arrs)
        num = numeric_grad(f, arrays[i])
        ana = leaf.grad if leaf.grad is not None else np.zeros_like(num)
        if skips[i] is not None:
            num, ana = num[~skips[i]], ana[~skips[i]]
        np.testing.assert_allclose(ana, num, rtol=rtol, atol=atol)


class TestConv1dExamples:
    def test_hand_cross_correlation(self):
        """[1,2,3] * [1,0,-1], pad 1 -> [-2,-2,2]."""
        y = ad.conv1d(T([[[1, 2, 3]]]), T([[[1, 0, -1]]]), None, padding=1)
        np.testing.assert_array_equal(y.value[0, 0], [-2, -2, 2])

    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((2, 1, 9))
        y = ad.conv1d(T(x), T([[[0, 1, 0]]]), None, padding=1)
        np.testing.assert_array_equal(y.value, x)

    def test_zero_weight_gives_bias(self):
        x = np.random.default_rng(1).standard_normal((2, 3, 7))
        y = ad.conv1d(T(x), T(np.zeros((4, 3, 5))), T([0.5, -1, 2, 0]), padding=2)
        np.testing.assert_array_equal(y.value, np.broadcast_to(np.array([0.5, -1, 2, 0])[None, :, None], (2, 4, 7)))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            x = rng.standard_normal((2, 3, 11))
            w = rng.standard_normal((4, 3, 5))
            b = rng.standard_normal(4)
            pad = int(rng.integers(0, 3))
            np.testing.assert_allclose(ad.conv1d(T(x), T(w), T(b), pad).value,
                                       naive_conv1d(x, w, b, pad), rtol=1e-12, atol=1e-12)

    def test_linear_in_input_and_weight(self):
        rng = np.random.default_rng(3)
        x1, x2 = rng.standard_normal((2, 2, 3, 10))
        w1, w2 = rng.standard_normal((2, 2, 3, 3))
        a, b = 1.7, -0.4
        conv = lambda x, w: ad.conv1d(T(x), T(w), None, 1).value
        np.testing.assert_allclose(conv(a * x1 + b * x2, w1), a * conv(x1, w1) + b * conv(x2, w1), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(conv(x1, a * w1 + b * w2), a * conv(x1, w1) + b * conv(x1, w2), rtol=1e-12, atol=1e-12)

    def test_shape_errors(self):
        with pytest.raises(ShapeMismatch):
            ad.conv1d(T(np.zeros((1, 2, 5))), T(np.zeros((1, 3, 3))))
        with pytest.raises(ShapeMismatch):
            ad.conv1d(T(np.zeros((1, 1, 5))), T(np.zeros((1, 1, 4))))
        with pytest.raises(ShapeMismatch):
            ad.conv1d(T(np.zeros((1, 1, 2))), T(np.zeros((1, 1, 5))), padding=0)


class TestBatchNormExamples:
    def test_standardized_input_is_fixed_point(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 3, 50))
        x = (x - x.mean(axis=(0, 2), keepdims=True)) / x.std(axis=(0, 2), keepdims=True)
        y = ad.batchnorm1d(T(x), T(np.ones(3)), T(np.zeros(3)), ad.BatchNormState.fresh(3, dtype=np.float64))
        np.testing.assert_allclose(y.value, x / np.sqrt(1 + 1e-5), rtol=1e-12, atol=1e-12)

    def test_constant_input_gives_beta(self):
        x = np.full((2, 2, 6), 3.7)
        y = ad.batchnorm1d(T(x), T(np.ones(2)), T([0.5, 0.5]), ad.BatchNormState.fresh(2, dtype=np.float64))
        np.testing.assert_allclose(y.value, 0.5, atol=1e-12)

    def test_zero_gamma_gives_beta(self):
        x = np.random.default_rng(1).standard_normal((2, 2, 6))
        y = ad.batchnorm1d(T(x), T(np.zeros(2)), T([1.0, -2.0]), ad.BatchNormState.fresh(2, dtype=np.float64))
        np.testing.assert_allclose(y.value[:, 0], 1.0, atol=1e-15)
        np.testing.assert_allclose(y.value[:, 1], -2.0, atol=1e-15)

    def test_train_output_standardized(self):
        rng = np.random.default_rng(2)
        x = 5 + 3 * rng.standard_normal((8, 4, 40))
        y = ad.batchnorm1d(T(x), T(np.ones(4)), T(np.zeros(4)), ad.BatchNormState.fresh(4, dtype=np.float64)).value
        assert np.all(np.abs(y.mean(axis=(0, 2))) < 1e-5)
        assert np.all(np.abs(y.var(axis=(0, 2)) - 1) < 1e-3)

    def test_matches_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((3, 2, 9))
        g, b = rng.standard_normal(2), rng.standard_normal(2)
        y = ad.batchnorm1d(T(x), T(g), T(b), ad.BatchNormState.fresh(2, dtype=np.float64))
        np.testing.assert_allclose(y.value, naive_batchnorm(x, g, b), rtol=1e-10, atol=1e-12)

    def test_running_statistics(self):
        """Biased variance normalizes; unbiased variance feeds the running estimate."""
        rng = np.random.default_rng(4)
        x = rng.standard_normal((2, 3, 10))
        st = ad.BatchNormState.fresh(3, dtype=np.float64)
        ad.batchnorm1d(T(x), T(np.ones(3)), T(np.zeros(3)), st)
        np.testing.assert_allclose(st.running_mean, 0.1 * x.mean(axis=(0, 2)))
        np.testing.assert_allclose(st.running_var, 0.9 + 0.1 * x.var(axis=(0, 2), ddof=1))

    def test_eval_uses_running_statistics(self):
        st = ad.BatchNormState(np.array([1.0]), np.array([4.0]), eps=0.0)
        y = ad.batchnorm1d(T([[[1.0, 3.0, 5.0]]]), T([2.0]), T([1.0]), st, training=False)
        np.testing.assert_allclose(y.value[0, 0], [1.0, 3.0, 5.0])

    def test_single_value_batch_rejected(self):
        with pytest.raises(DegenerateBatch):
            ad.batchnorm1d(T(np.zeros((1, 2, 1))), T(np.ones(2)), T(np.zeros(2)), ad.BatchNormState.fresh(2))


class TestElementwiseExamples:
    def test_l1_identity(self):
        x = np.random.default_rng(0).standard_normal((2, 1, 5))
        assert float(ad.l1_loss(T(x), T(x)).value) == 0.0

    def test_l1_hand(self):
        assert float(ad.l1_loss(T([1.0, -1.0]), T([0.0, 0.0])).value) == 1.0

    def test_tanh_zero(self):
        assert float(ad.tanh(T([0.0])).value[0]) == 0.0

    def test_relu(self):
        np.testing.assert_array_equal(ad.relu(T([-1.0, 0.0, 2.0])).value, [0, 0, 2])


class TestBackwardContract:
    def test_linear_map_gradient(self):
        x = np.array([0.3, -1.2, 2.0])
        w = T(np.zeros(3), True)
        with ad.Tape() as tape:
            tape.backward(ad.sum(ad.mul(w, T(x))))
        np.testing.assert_array_equal(w.grad, x)

    def test_l1_gradient(self):
        w = T([2.0, -3.0], True)
        with ad.Tape() as tape:
            tape.backward(ad.l1_loss(w, T([0.0, 0.0])))
        np.testing.assert_array_equal(w.grad, [0.5, -0.5])

    def test_backward_twice_accumulates(self):
        w = T([1.0, 2.0], True)
        with ad.Tape() as tape:
            loss = ad.sum(ad.mul(w, w))
            tape.backward(loss)
            tape.backward(loss)
        np.testing.assert_array_equal(w.grad, [4.0, 8.0])

    def test_nonscalar_loss_rejected(self):
        w = T([1.0, 2.0], True)
        with ad.Tape() as tape:
            with pytest.raises(NonScalarLoss):
                tape.backward(ad.mul(w, w))

    def test_no_tape_records_nothing(self):
        w = T([1.0], True)
        y = ad.mul(w, w)
        with pytest.raises(RuntimeError):
            ad.backward(y)


class TestGradientChecks:
    """Central differences, h = 1e-5, float64, 20 random shapes per operator."""

    @pytest.mark.parametrize("seed", range(N_SHAPES))
    def test_conv1d(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.choice([1, 3, 5]))
        b, cin, cout = (int(v) for v in rng.integers(1, 4, 3))
        t = int(rng.integers(k, 10))
        pad = int(rng.integers(0, (k - 1) // 2 + 1))
        x = rng.standard_normal((b, cin, t))
        w = rng.standard_normal((cout, cin, k))
        bias = rng.standard_normal(cout)
        grad_check(lambda x, w, bb: ad.conv1d(x, w, bb, pad), [x, w, bias], rng)

    @pytest.mark.parametrize("seed", range(N_SHAPES))
    def test_batchnorm_train(self, seed):
        rng = np.random.default_rng(100 + seed)
        b, c, t = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 8))
        x = rng.standard_normal((b, c, t)) * rng.uniform(0.5, 3) + rng.uniform(-2, 2)
        g, be = rng.standard_normal(c), rng.standard_normal(c)

        def build(x, g, be):
            return ad.batchnorm1d(x, g, be, ad.BatchNormState.fresh(c, dtype=np.float64), training=True)
        grad_check(build, [x, g, be], rng)

    @pytest.mark.parametrize("seed", range(N_SHAPES))
    def test_batchnorm_eval(self, seed):
        rng = np.random.default_rng(200 + seed)
        b, c, t = (int(v) for v in rng.integers(1, 5, 3))
        x = rng.standard_normal((b, c, t))
        g, be = rng.standard_normal(c), rng.standard_normal(c)
        st = ad.BatchNormState(rng.standard_normal(c), rng.uniform(0.5, 2, c))
        grad_check(lambda x, g, be: ad.batchnorm1d(x, g, be, st, training=False), [x, g, be], rng)

    @pytest.mark.parametrize("seed", range(N_SHAPES))
    def test_relu(self, seed):
        rng = np.random.default_rng(300 + seed)
        x = rng.standard_normal(tuple(int(v) for v in rng.integers(1, 6, 3)))
        grad_check(ad.relu, [x], rng, mask=lambda a: [np.abs(a[0]) < 1e-3])

    @pytest.mark.parametrize("seed", range(N_SHAPES))
    def test_tanh(self, seed):
        rng = np.random.default_rng(400 + seed)
        x = 2 * rng.standard_normal(tuple(int(v) for v in rng.integers(1, 6, 3)))
        grad_check(ad.tanh, [x], rng)

    @pytest.mark.parametrize("seed", range(N_SHAPES))
    def test_l1_loss(self, seed):
        rng = np.random.default_rng(500 + seed)
        shape = tuple(int(v) for v in rng.integers(1, 6, 3))
        p, t = rng.standard_normal(shape), rng.standard_normal(shape)
        kink = np.abs(p - t) < 1e-3
        grad_check(ad.l1_loss, [p, t], rng, mask=lambda a: [kink, kink])

    @pytest.mark.parametrize("seed", range(5))
    def test_composite_network(self, seed):
        """conv -> relu -> bn -> conv -> tanh -> l1 end to end."""
        rng = np.random.default_rng(600 + seed)
        x = rng.standard_normal((2, 1, 8))
        target = rng.uniform(-0.5, 0.5, (2, 1, 8))
        w1, b1 = rng.standard_normal((3, 1, 3)), rng.standard_normal(3)
        g, be = rng.uniform(0.5, 1.5, 3), rng.standard_normal(3)
        w2, b2 = rng.standard_normal((1, 3, 3)), rng.standard_normal(1)

        def build(w1, b1, g, be, w2, b2):
            h = ad.relu(ad.conv1d(T(x), w1, b1, 1))
            h = ad.batchnorm1d(h, g, be, ad.BatchNormState.fresh(3, dtype=np.float64))
            return ad.l1_loss(ad.tanh(ad.conv1d(h, w2, b2, 1)), T(target))
        grad_check(build, [w1, b1, g, be, w2, b2], rng, rtol=1e-4, atol=1e-6)


class TestAdam:
    def test_first_step(self):
        p = np.array([0.0])
        ad.adam_step([p], [np.array([1.0])], ad.AdamState(lr=1e-3))
        np.testing.assert_allclose(p, [-1e-3 / (1 + 1e-8)], rtol=1e-12)

    def test_zero_gradient_keeps_parameters(self):
        p = np.array([0.3, -2.0])
        st = ad.AdamState()
        for _ in range(10):
            ad.adam_step([p], [np.zeros(2)], st)
        np.testing.assert_array_equal(p, [0.3, -2.0])

    def test_quadratic_descends(self):
        w = T([1.0], True)
        opt = ad.Adam([w], lr=1e-2)
        for _ in range(500):
            with ad.Tape() as tape:
                opt.zero_grad()
                tape.backward(ad.sum(ad.mul(w, w)))
            opt.step()
        assert abs(w.value[0]) < 0.5

    def test_step_sign_follows_moment(self):
        rng = np.random.default_rng(0)
        p = rng.standard_normal(50)
        st = ad.AdamState()
        for _ in range(3):
            g = rng.standard_normal(50)
            before = p.copy()
            ad.adam_step([p], [g], st)
            step = p - before
            m = st.m[0]
            nz = m != 0
            np.testing.assert_array_equal(np.sign(step[nz]), -np.sign(m[nz]))


@pytest.mark.skipif("cython" not in kernels.available(), reason="compiled kernels not built")
class TestBackendAgreement:
    """float32 compiled kernels against the numpy reference path."""

    def _run(self, backend, x, w, b, g, be, gy):
        kernels.use(backend)
        try:
            y, ctx = kernels.conv1d_forward(x, w, b, 2)
            gx, gw, gb = kernels.conv1d_backward(ctx, gy)
            z, _, _, bctx = kernels.batchnorm_train_forward(y, g, be, 1e-5)
            bgx, bgg, bgb = kernels.batchnorm_train_backward(bctx, g, gy)
            return y, gx, gw, gb, z, bgx, bgg, bgb
        finally:
            kernels.use("cython")

    def test_conv_and_batchnorm_agree(self):
        rng = np.random.default_rng(0)
        f = lambda *s: rng.standard_normal(s).astype(np.float32)
        x, w, b = f(6, 8, 64), f(16, 8, 5), f(16)
        g, be, gy = f(16), f(16), f(6, 16, 64)
        a = self._run("cython", x, w, b, g, be, gy)
        r = self._run("numpy", x, w, b, g, be, gy)
        for u, v in zip(a, r):
            np.testing.assert_allclose(u, v, rtol=2e-4, atol=2e-4)


class TestBackendSelection:
    def test_env_forces_numpy(self):
        import os
        import subprocess
        import sys
        code = "from dartk.autodiff import kernels; print(kernels.backend_name(), kernels.available())"
        env = {**os.environ, "DARTK_PURE_PYTHON": "1"}
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.split()[0] == "numpy"
        assert "cython" not in out.stdout

    def test_use_rejects_unknown(self):
        from dartk.autodiff import kernels
        with pytest.raises(ValueError):
            kernels.use("fortran")
