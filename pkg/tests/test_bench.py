import math

import numpy as np
import pytest

from bayesopticflow.bench import (
    FLOW_IDS,
    NoiseSpec,
    advect_image,
    compare_images,
    endpoint_error,
    eval_flow_field,
    make_case,
    make_first_image,
    reconstruct_second_image,
    rmse,
    synthetic_case,
    true_flow,
    Metrics,
)
from bayesopticflow.exceptions import DimensionError, DomainError
from bayesopticflow.grid import FlowField, GridSpec, ImageField, assemble_system
from bayesopticflow.sampler import ChainConfig, run_chain
from bayesopticflow.uq import mean_flow


def loop_advect(F, U, V, dx, dy):
    """g = f - fx u - fy v with one-sided differences, written as scalar loops."""
    nx, ny = F.shape
    G = np.empty_like(F)
    for i in range(nx):
        for j in range(ny):
            i0, i1 = (i, i + 1) if i < nx - 1 else (i - 1, i)
            j0, j1 = (j, j + 1) if j < ny - 1 else (j - 1, j)
            fx = (F[i1, j] - F[i0, j]) / dx
            fy = (F[i, j1] - F[i, j0]) / dy
            G[i, j] = F[i, j] - fx * U[i, j] - fy * V[i, j]
    return G


def test_flow_examples():
    assert eval_flow_field(1, 0.5, -0.5) == (0.5, -0.5)
    u, v = eval_flow_field(2, 1.0, 0.0)
    assert (u, v) == (0.0, 1.0)
    assert eval_flow_field(4, 0.0, 0.0) == (0.0, 0.0)


def test_flow_definitions_pointwise():
    rng = np.random.default_rng(0)
    pi = math.pi
    for x, y in rng.uniform(-1, 1, size=(20, 2)):
        assert eval_flow_field(3, x, y) == pytest.approx((y, math.sin(x)))
        assert eval_flow_field(4, x, y) == pytest.approx(
            (-pi * math.sin(pi * x / 2) * math.cos(pi * y / 2), pi * math.cos(pi * x / 2) * math.sin(pi * y / 2)))
        assert eval_flow_field(5, x, y) == pytest.approx(
            (-pi * math.sin(pi * x) * math.cos(pi * y), pi * math.cos(pi * x) * math.sin(pi * y)))


@pytest.mark.parametrize("flow_id", [0, 6, -1])
def test_flow_id_domain(flow_id):
    with pytest.raises(DomainError):
        eval_flow_field(flow_id, 0.0, 0.0)


def test_true_flow_on_grid():
    g = GridSpec(5, 4)
    f = true_flow(2, g)
    x, y = g.coords()
    assert f.u[1, 3] == pytest.approx(-y[3])
    assert f.v[1, 3] == pytest.approx(x[1])


def test_first_image_values():
    g = GridSpec(3, 3)
    F = make_first_image(g).data
    assert F[1, 1] == 1.0
    assert F[0, 1] == pytest.approx(0.0, abs=1e-15)
    assert F[2, 1] == pytest.approx(0.0, abs=1e-15)
    F30 = make_first_image(GridSpec(30, 30)).data
    assert F30.min() >= 0.0 and F30.max() <= 1.0


def test_advect_zero_flow_and_constant_image():
    g = GridSpec(6, 5)
    F = make_first_image(g)
    G = advect_image(F, FlowField(g, np.zeros(g.shape), np.zeros(g.shape)))
    np.testing.assert_array_equal(G.data, F.data)
    C = ImageField(g, np.full(g.shape, 0.7))
    np.testing.assert_array_equal(advect_image(C, true_flow(5, g)).data, C.data)


@pytest.mark.parametrize("flow_id", FLOW_IDS)
def test_advect_matches_loop_oracle(flow_id):
    g = GridSpec(30, 30)
    F = make_first_image(g)
    flow = true_flow(flow_id, g)
    G = advect_image(F, flow)
    np.testing.assert_allclose(G.data, loop_advect(F.data, flow.u, flow.v, g.dx, g.dy), rtol=0, atol=1e-12)


def test_advect_grid_mismatch():
    with pytest.raises(DimensionError):
        advect_image(make_first_image(GridSpec(4, 4)), true_flow(1, GridSpec(5, 4)))


def test_noisy_advection_needs_rng():
    g = GridSpec(4, 4)
    with pytest.raises(ValueError):
        advect_image(make_first_image(g), true_flow(1, g), NoiseSpec("gaussian", 0.1))


@pytest.mark.parametrize("kind", ["gaussian", "uniform", "laplace"])
def test_noise_standard_deviation(kind):
    g = GridSpec(5, 5)
    F = make_first_image(g)
    flow = true_flow(3, g)
    clean = advect_image(F, flow).data
    sigma = 0.02
    rng = np.random.default_rng(1)
    eta = np.array([advect_image(F, flow, NoiseSpec(kind, sigma), rng).data - clean for _ in range(10_000)])
    sd = eta.std(axis=0, ddof=1)
    assert np.all(np.abs(sd - sigma) <= 0.05 * sigma)
    assert abs(eta.mean()) <= 4 * sigma / math.sqrt(eta.size)


def test_noise_kinds_have_expected_shape():
    rng = np.random.default_rng(2)
    u = NoiseSpec("uniform", 1.0).draw(50_000, rng)
    assert np.abs(u).max() <= math.sqrt(3)
    lap = NoiseSpec("laplace", 1.0).draw(200_000, rng)
    # excess kurtosis of the Laplace law is 3
    k = np.mean(lap ** 4) / np.mean(lap ** 2) ** 2 - 3
    assert abs(k - 3) < 0.3
    np.testing.assert_array_equal(NoiseSpec("none", 5.0).draw(4, rng), 0.0)


def test_noise_spec_validation():
    with pytest.raises(DomainError):
        NoiseSpec("poisson", 0.1)
    with pytest.raises(DomainError):
        NoiseSpec("gaussian", -0.1)


def test_case_noiseless_and_noisy():
    clean = synthetic_case(1)
    np.testing.assert_array_equal(clean.G.data, clean.Gbar.data)
    noisy = synthetic_case(1, noise=NoiseSpec("gaussian", 0.02), rng=np.random.default_rng(0))
    np.testing.assert_array_equal(noisy.Gbar.data, clean.Gbar.data)
    assert not np.array_equal(noisy.G.data, noisy.Gbar.data)
    assert noisy.grid == GridSpec(30, 30)
    np.testing.assert_array_equal(noisy.truth.u, true_flow(1, noisy.grid).u)


def test_case_no_clamping():
    # large flow pushes intensities outside [0, 1]; the equation is applied literally
    case = synthetic_case(5)
    assert case.G.data.min() < 0.0 or case.G.data.max() > 1.0


def test_endpoint_error_examples():
    g = GridSpec(4, 3)
    t = true_flow(4, g)
    assert endpoint_error(t, t) == 0.0
    shifted = FlowField(g, t.u + 1.0, t.v)
    assert endpoint_error(shifted, t) == pytest.approx(1.0, rel=1e-14)


def test_endpoint_error_loop_oracle():
    g = GridSpec(6, 7)
    rng = np.random.default_rng(3)
    a = FlowField(g, rng.normal(size=g.shape), rng.normal(size=g.shape))
    b = FlowField(g, rng.normal(size=g.shape), rng.normal(size=g.shape))
    total = 0.0
    for i in range(6):
        for j in range(7):
            total += math.sqrt((a.u[i, j] - b.u[i, j]) ** 2 + (a.v[i, j] - b.v[i, j]) ** 2)
    assert endpoint_error(a, b) == pytest.approx(total / 42, rel=1e-12)
    with pytest.raises(DimensionError):
        endpoint_error(a, true_flow(1, GridSpec(7, 6)))


def test_reconstruction_examples():
    g = GridSpec(8, 8)
    F = make_first_image(g)
    zero = FlowField(g, np.zeros(g.shape), np.zeros(g.shape))
    np.testing.assert_array_equal(reconstruct_second_image(F, zero).data, F.data)
    case = make_case(F, 3)
    np.testing.assert_array_equal(reconstruct_second_image(F, case.truth).data, case.Gbar.data)


def test_reconstruction_beats_zero_flow_baseline():
    g = GridSpec(12, 12)
    case = synthetic_case(2, g)
    sys = assemble_system(case.F, case.G)
    res = run_chain(sys, cfg=ChainConfig(iterations=400, burn_in=100, seed=0, max_restarts=0))
    ghat = reconstruct_second_image(case.F, mean_flow(res, g))
    assert rmse(ghat, case.Gbar) < rmse(case.F, case.Gbar)


def test_compare_images_examples():
    g = GridSpec(4, 5)
    a = make_first_image(g)
    c = compare_images(a, a, a)
    assert c.rmse_g == 0.0 and c.rmse_gbar == 0.0
    shifted = ImageField(g, a.data + 0.25)
    c = compare_images(a, shifted, a)
    assert c.rmse_g == pytest.approx(0.25, rel=1e-12)
    np.testing.assert_array_equal(c.g, shifted.vec)
    assert c.ghat.shape == c.gbar.shape == (g.size,)


def test_compare_images_loop_oracle():
    g = GridSpec(5, 6)
    rng = np.random.default_rng(4)
    a, b, t = (ImageField(g, rng.random(g.shape)) for _ in range(3))
    c = compare_images(a, b, t)
    s = sum((a.data[i, j] - b.data[i, j]) ** 2 for i in range(5) for j in range(6))
    assert c.rmse_g == pytest.approx(math.sqrt(s / 30), rel=1e-12)
    with pytest.raises(DimensionError):
        compare_images(a, b, make_first_image(GridSpec(6, 5)))


def test_metrics_non_negative():
    Metrics(0.0, 0.1, 0.2)
    with pytest.raises(DomainError):
        Metrics(-1.0, 0.0, 0.0)
