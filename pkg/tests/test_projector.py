import math

import numpy as np
import pytest
from scipy.stats import norm

from gestura.projector import (
    ProjectorParams,
    concat_ground,
    gelu,
    gelu_grad,
    identity,
    identity_grad,
    init_params,
    load_checkpoint,
    projector_backward,
    projector_forward,
    save_checkpoint,
)

FD_STEP = 1e-5
FD_TOL = 1e-5


def naive_forward(v, p, act):
    # straight-line oracle with explicit loops over the matrix products
    def matvec(W, x, b):
        out = np.zeros(W.shape[0])
        for i in range(W.shape[0]):
            acc = b[i]
            for j in range(W.shape[1]):
                acc += W[i, j] * x[j]
            out[i] = acc
        return out

    h1 = np.array([act(x) for x in matvec(p.W1, v, p.b1)])
    h2 = np.array([act(x) for x in matvec(p.W2, h1, p.b2)])
    return matvec(p.W3, h2, p.b3)


def scalar_gelu(x):
    return x * 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def fd_gradients(v, params, upstream, activation):
    """Central finite differences of g . f(v; params) over every scalar."""

    def scalar_loss(p, vv):
        return float(np.dot(upstream, projector_forward(vv, p, activation)))

    grads = []
    for bi, block in enumerate(params.blocks()):
        g = np.zeros_like(block)
        it = np.nditer(block, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            plus = params.copy()
            plus.blocks()[bi][idx] += FD_STEP
            minus = params.copy()
            minus.blocks()[bi][idx] -= FD_STEP
            g[idx] = (scalar_loss(plus, v) - scalar_loss(minus, v)) / (2 * FD_STEP)
            it.iternext()
        grads.append(g)
    dv = np.zeros_like(v)
    for j in range(v.size):
        vp = v.copy()
        vp[j] += FD_STEP
        vm = v.copy()
        vm[j] -= FD_STEP
        dv[j] = (scalar_loss(params, vp) - scalar_loss(params, vm)) / (2 * FD_STEP)
    return grads, dv


def rel_err(a, b):
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1.0)
    return np.max(np.abs(a - b)) / denom


class TestGelu:
    def test_zero(self):
        assert gelu(0.0) == 0.0

    def test_known_value(self):
        # gelu(1) = 1 * Phi(1)
        assert abs(float(gelu(1.0)) - norm.cdf(1.0)) < 1e-14

    def test_matches_scalar_oracle(self):
        xs = np.linspace(-5, 5, 101)
        expected = np.array([scalar_gelu(x) for x in xs])
        np.testing.assert_allclose(gelu(xs), expected, atol=1e-14)

    def test_grad_matches_fd(self):
        xs = np.linspace(-4, 4, 81)
        fd = (gelu(xs + FD_STEP) - gelu(xs - FD_STEP)) / (2 * FD_STEP)
        np.testing.assert_allclose(gelu_grad(xs), fd, atol=1e-8)

    def test_asymptotes(self):
        assert abs(float(gelu(10.0)) - 10.0) < 1e-12
        assert abs(float(gelu(-10.0))) < 1e-12


class TestInitParams:
    def test_shapes(self):
        p = init_params(16, 32, 8, seed=0)
        assert p.W1.shape == (32, 16)
        assert p.W2.shape == (32, 32)
        assert p.W3.shape == (8, 32)
        assert np.all(p.b1 == 0) and np.all(p.b2 == 0) and np.all(p.b3 == 0)

    def test_bound(self):
        p = init_params(16, 32, 8, seed=3)
        a1 = math.sqrt(6.0 / (16 + 32))
        assert np.max(np.abs(p.W1)) <= a1

    def test_seeded(self):
        assert init_params(4, 6, 3, seed=9).tobytes() == init_params(4, 6, 3, seed=9).tobytes()
        assert init_params(4, 6, 3, seed=9).tobytes() != init_params(4, 6, 3, seed=10).tobytes()


class TestForward:
    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(0)
        for seed in range(5):
            p = init_params(6, 9, 4, seed=seed)
            v = rng.normal(size=6)
            got = projector_forward(v, p)
            expected = naive_forward(v, p, scalar_gelu)
            np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_identity_activation_is_affine(self):
        # with the identity hook the network collapses to W3 W2 (W1 v)
        p = init_params(5, 7, 3, seed=1)
        v = np.random.default_rng(1).normal(size=5)
        got = projector_forward(v, p, activation=identity)
        expected = p.W3 @ (p.W2 @ (p.W1 @ v + p.b1) + p.b2) + p.b3
        np.testing.assert_allclose(got, expected, atol=1e-14)

    def test_rejects_wrong_input_shape(self):
        p = init_params(5, 7, 3, seed=0)
        with pytest.raises(ValueError):
            projector_forward(np.zeros(4), p)


class TestBackward:
    @pytest.mark.parametrize("seed", range(4))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        dims = [(4, 6, 3), (6, 8, 5), (3, 5, 2), (8, 10, 4)][seed]
        p = init_params(*dims, seed=seed)
        v = rng.normal(size=dims[0])
        upstream = rng.normal(size=dims[2])
        grads, dv = projector_backward(v, p, upstream)
        fd_blocks, fd_dv = fd_gradients(v, p, upstream, gelu)
        for got, expected in zip(grads.blocks(), fd_blocks):
            assert rel_err(got, expected) <= FD_TOL
        assert rel_err(dv, fd_dv) <= FD_TOL

    def test_identity_activation_gradients(self):
        # affine network: closed-form gradients available for cross-checking
        p = init_params(4, 5, 3, seed=2)
        rng = np.random.default_rng(2)
        v = rng.normal(size=4)
        g = rng.normal(size=3)
        grads, dv = projector_backward(v, p, g, activation=identity, activation_grad=identity_grad)
        h1 = p.W1 @ v + p.b1
        h2 = p.W2 @ h1 + p.b2
        np.testing.assert_allclose(grads.W3, np.outer(g, h2), atol=1e-14)
        np.testing.assert_allclose(grads.b3, g, atol=1e-14)
        np.testing.assert_allclose(grads.b2, p.W3.T @ g, atol=1e-14)
        np.testing.assert_allclose(dv, p.W1.T @ (p.W2.T @ (p.W3.T @ g)), atol=1e-13)


class TestConcatGround:
    def test_order_and_length(self):
        out = concat_ground([1.0, 2.0], [3.0, 4.0, 5.0])
        np.testing.assert_array_equal(out, [1.0, 2.0, 3.0, 4.0, 5.0])

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            concat_ground([np.nan], [1.0])


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        p = init_params(10, 14, 6, seed=5)
        path = tmp_path / "proj.ckpt"
        save_checkpoint(p, path, seed=5)
        loaded, seed = load_checkpoint(path)
        assert seed == 5
        assert loaded.tobytes() == p.tobytes()

    def test_header_layout(self, tmp_path):
        import struct

        p = init_params(3, 4, 2, seed=7)
        path = tmp_path / "proj.ckpt"
        save_checkpoint(p, path, seed=7)
        raw = path.read_bytes()
        assert struct.unpack_from("<4q", raw) == (3, 4, 2, 7)
        n_params = sum(b.size for b in p.blocks())
        assert len(raw) == 32 + 8 * n_params
        # first block starts right after the header, row-major float64
        first = np.frombuffer(raw[32:32 + 8 * p.W1.size], dtype="<f8").reshape(4, 3)
        np.testing.assert_array_equal(first, p.W1)

    def test_truncation_detected(self, tmp_path):
        p = init_params(3, 4, 2, seed=0)
        path = tmp_path / "proj.ckpt"
        save_checkpoint(p, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes_detected(self, tmp_path):
        p = init_params(3, 4, 2, seed=0)
        path = tmp_path / "proj.ckpt"
        save_checkpoint(p, path)
        path.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(ValueError, match="trailing"):
            load_checkpoint(path)


class TestParamsValidation:
    def test_inconsistent_blocks(self):
        with pytest.raises(ValueError):
            ProjectorParams(W1=np.zeros((4, 3)), b1=np.zeros(5), W2=np.zeros((4, 4)),
                            b2=np.zeros(4), W3=np.zeros((2, 4)), b3=np.zeros(2))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            ProjectorParams(W1=np.full((4, 3), np.nan), b1=np.zeros(4), W2=np.zeros((4, 4)),
                            b2=np.zeros(4), W3=np.zeros((2, 4)), b3=np.zeros(2))
