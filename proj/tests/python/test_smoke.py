"""End-to-end checks of the python bindings against plain numpy oracles."""

import math

import numpy as np
import pytest

import gpcert


RNG = np.random.default_rng(20240817)


def se_params(dim, variance=1.3, lengthscale=0.9):
    return gpcert.SeKernelParams(variance, np.full(dim, lengthscale))


def random_dataset(n=24, state_dim=2, control_dim=2):
    data = gpcert.Dataset(state_dim, control_dim)
    for _ in range(n):
        x = RNG.uniform(-1.5, 1.5, state_dim)
        u = RNG.uniform(-1.5, 1.5, control_dim)
        data.append(x, u, float(RNG.normal()))
    return data


def fitted_model(n=24, noise=1e-2):
    kernel = gpcert.AdpKernel.squared_exponential(
        se_params(2), [se_params(2), se_params(2)]
    )
    return gpcert.GpModel.fit(kernel, random_dataset(n), noise)


def test_se_kernel_matches_the_closed_form():
    params = se_params(3, variance=1.7, lengthscale=0.8)
    a = np.array([0.3, -0.7, 1.1])
    b = np.array([-0.2, 0.4, 0.9])
    expected = 1.7 * math.exp(-0.5 * float(np.sum(((a - b) / 0.8) ** 2)))
    assert gpcert.se_eval(params, a, b) == pytest.approx(expected, rel=1e-14)


def test_compound_kernel_decomposes_over_control_channels():
    kernel = gpcert.AdpKernel.squared_exponential(
        se_params(2), [se_params(2, 0.6), se_params(2, 2.0)]
    )
    x, x2 = RNG.uniform(-1, 1, 2), RNG.uniform(-1, 1, 2)
    u, u2 = RNG.uniform(-1, 1, 2), RNG.uniform(-1, 1, 2)
    direct = kernel.kf(x, x2) + sum(
        u[c] * kernel.kg(c, x, x2) * u2[c] for c in range(kernel.control_dim())
    )
    assert kernel.eval(x, u, x2, u2) == pytest.approx(direct, rel=1e-14)
    assert kernel.eval(x, u, x2, u2) == pytest.approx(
        kernel.eval(x2, u2, x, u), rel=1e-14
    )


def test_dataset_round_trips_through_files(tmp_path):
    data = random_dataset(10)
    path = str(tmp_path / "data.txt")
    data.save(path)
    back = gpcert.Dataset.load(path)
    assert len(back) == 10
    assert back.content_hash() == data.content_hash()
    assert np.array_equal(back.state(3), data.state(3))
    assert back.output(7) == data.output(7)


def test_posterior_matches_a_numpy_gp_solve():
    noise = 1e-2
    model = fitted_model(n=18, noise=noise)
    data, kernel = model.data(), model.kernel()
    n = len(data)

    gram = np.array(
        [
            [
                kernel.eval(data.state(i), data.control(i), data.state(j), data.control(j))
                for j in range(n)
            ]
            for i in range(n)
        ]
    )
    gram += (noise + model.jitter()) * np.eye(n)
    alpha = np.linalg.solve(gram, np.array([data.output(j) for j in range(n)]))

    for _ in range(5):
        x = RNG.uniform(-1.5, 1.5, 2)
        u = RNG.uniform(-1.5, 1.5, 2)
        k_star = np.array(
            [kernel.eval(x, u, data.state(j), data.control(j)) for j in range(n)]
        )
        pred = model.predict(x, u)
        assert pred.mean == pytest.approx(float(k_star @ alpha), rel=1e-8, abs=1e-10)
        expected_var = kernel.eval(x, u, x, u) - float(
            k_star @ np.linalg.solve(gram, k_star)
        )
        assert pred.variance == pytest.approx(expected_var, rel=1e-6, abs=1e-10)

        # The affine/quadratic control representation reproduces the same value.
        coeffs = model.mean_coeffs(x)
        s_matrix = model.variance_gram(x)
        one_u = np.concatenate(([1.0], u))
        assert float(coeffs @ one_u) == pytest.approx(pred.mean, rel=1e-9, abs=1e-11)
        assert float(one_u @ s_matrix @ one_u) == pytest.approx(
            pred.variance, rel=1e-8, abs=1e-11
        )


def test_online_selection_returns_a_decorrelated_subset():
    model = fitted_model(n=30)
    indicator = gpcert.build_correlation_indicator(model, 0.9)
    assert indicator.size() == 30
    assert indicator.epsilon() == pytest.approx(0.9)

    cfg = gpcert.SelectionConfig()
    cfg.M = 8
    cfg.epsilon = 0.9
    subset = gpcert.select_online(
        model, np.array([0.2, -0.3]), cfg, indicator, np.array([[1.0, -0.5]])
    )
    idx = list(subset.indices)
    assert 0 < len(idx) <= 8
    assert len(set(idx)) == len(idx)
    for a in idx:
        for b in idx:
            if a != b:
                assert not indicator.at(a, b)

    naive = gpcert.naive_select(model, np.array([0.2, -0.3]), np.array([[1.0, -0.5]]), 8)
    assert len(naive.indices) == 8

    quality = gpcert.data_quality(model, idx, np.array([0.2, -0.3]), np.array([[1.0, -0.5]]))
    assert 0.0 <= quality <= 1.0

    quantiles = gpcert.correlation_quantiles(model, [0.0, 0.5, 1.0])
    assert quantiles[0] <= quantiles[1] <= quantiles[2]


def test_selection_objective_and_bounds_agree_with_numpy():
    model = fitted_model(n=20)
    data, kernel = model.data(), model.kernel()
    subset = [1, 4, 9, 13]
    x = np.array([0.4, 0.1])
    u = np.array([-0.6, 0.8])

    k_sub = np.array(
        [
            [
                kernel.eval(data.state(i), data.control(i), data.state(j), data.control(j))
                for j in subset
            ]
            for i in subset
        ]
    ) + model.noise_variance() * np.eye(len(subset))
    # The cross vector keeps only the control-dependent kernel slice: the
    # objective scores what a subset explains about the input-gain direction.
    r = np.array([kernel.eval_u(x, u, data.state(j), data.control(j)) for j in subset])
    expected = float(r @ np.linalg.solve(k_sub, r))
    assert gpcert.selection_objective(model, subset, x, u) == pytest.approx(
        expected, rel=1e-9
    )

    check = gpcert.theorem1_bound(model, subset, x, u, 0.95)
    assert math.isfinite(check.lhs) and math.isfinite(check.rhs)
    if check.conditions_ok:
        assert check.lhs >= check.rhs - 1e-10
    check3 = gpcert.theorem3_bound(model, subset, x, u, 0.95)
    assert math.isfinite(check3.rhs)


def test_cone_solver_agrees_with_a_dense_numpy_grid():
    # minimize |u - u_ref| subject to sqrt(1 + u^2) <= 2 u  (i.e. u >= 3^-1/2).
    prob = gpcert.ConeProblem()
    prob.u_ref = np.array([0.0])
    prob.cone_scale = 1.0
    prob.cone_matrix = np.eye(2)
    prob.affine_offset = 0.0
    prob.affine_row = np.array([[2.0]])

    res = gpcert.solve_filter_problem(prob)
    assert res.status == gpcert.SolveStatus.Optimal
    assert res.u[0] == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-6)
    assert gpcert.cone_violation(prob, res.u) <= 1e-7
    assert gpcert.kkt_residual(prob, res) <= 1e-7

    grid = np.linspace(-4.0, 4.0, 80001)
    feasible = np.sqrt(1.0 + grid**2) - 2.0 * grid <= 0.0
    best = np.min(np.abs(grid[feasible]))
    assert res.objective <= best + 1e-5

    # Box-constrained variant pushed onto a face.
    prob.bounds = gpcert.Box(np.array([0.7]), np.array([2.0]))
    res_box = gpcert.solve_filter_problem(prob)
    assert res_box.status == gpcert.SolveStatus.Optimal
    assert res_box.u[0] == pytest.approx(0.7, abs=1e-6)

    backup = gpcert.solve_backup_problem(prob)
    assert backup.status == gpcert.SolveStatus.Optimal


def test_beta_calibration_covers_the_training_set():
    model = fitted_model(n=25, noise=1e-2)
    data = model.data()
    cfg = gpcert.ErrorBoundConfig()
    cfg.delta = 0.1
    beta = gpcert.calibrate_beta(model, data, cfg)
    assert beta > 0.0

    covered = 0
    for j in range(len(data)):
        pred = model.predict(data.state(j), data.control(j))
        if abs(pred.mean - data.output(j)) <= beta * pred.stddev + 1e-12:
            covered += 1
    assert covered >= math.ceil(0.9 * len(data) - 1e-9)
