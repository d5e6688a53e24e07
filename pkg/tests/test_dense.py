import numpy as np

from satconv.dense import conv2d, conv2d_input_grad, conv2d_kernel_grad
from satconv.oracle import DenseKernel, naive_conv


def test_conv2d_matches_loop_oracle(rng):
    for d in (1, 2, 4):
        for size in (3, 4):
            x = rng.normal(size=(7, 9))
            k = rng.normal(size=(size, size))
            got = conv2d(x, k, dilation=d)
            want = naive_conv(x, DenseKernel(k, dilation=d))
            assert np.max(np.abs(got - want)) < 1e-12


def test_conv2d_grads_match_exact_linearization(rng):
    x = rng.normal(size=(6, 5))
    k = rng.normal(size=(3, 3))
    g = rng.normal(size=(6, 5))
    gin = conv2d_input_grad(k, g)
    gk = conv2d_kernel_grad(x, g, k.shape)
    # input grad: adjoint identity against a random direction
    v = rng.normal(size=x.shape)
    lhs = float(np.sum(gin * v))
    rhs = float(np.sum(g * conv2d(v, k)))
    assert abs(lhs - rhs) < 1e-9
    # kernel grad: the map is linear in the kernel too
    u = rng.normal(size=k.shape)
    lhs = float(np.sum(gk * u))
    rhs = float(np.sum(g * conv2d(x, u)))
    assert abs(lhs - rhs) < 1e-9


def test_conv2d_dilated_grads(rng):
    x = rng.normal(size=(8, 8))
    k = rng.normal(size=(4, 4))
    g = rng.normal(size=(8, 8))
    gin = conv2d_input_grad(k, g, dilation=2)
    v = rng.normal(size=x.shape)
    assert abs(float(np.sum(gin * v)) - float(np.sum(g * conv2d(v, k, dilation=2)))) < 1e-9
