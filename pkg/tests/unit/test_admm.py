"""Unit tests for the ADMM updates, the fit loop and its exports."""

import csv
import json
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

import ncsvm.admm as admm
from ncsvm.admm import (
    DivergenceError,
    SolverConfig,
    SolverState,
    TerminatedBy,
    augmented_lagrangian,
    b_stationarity_residual,
    constraint_residual,
    fit,
    initialize,
    objective,
    true_objective,
    update_b,
    update_duals,
    update_s,
    update_xi,
    update_z,
    w_stationarity_residual,
    write_report_json,
    write_trace_csv,
)
from ncsvm.data import Dataset, SplitSpec, stratified_split
from ncsvm.model import LinearModel
from ncsvm.penalty import PenaltyConfig, PenaltyKind, ProxProblem, prox_objective, prox_oracle, prox_vector
from ncsvm.wsolve import Branch, DimensionMismatchError, HOperator
from tests.fixtures.synthetic import random_state, two_point_dataset


def solver(kind: str = "scad", lam: float = 2.0**-6, theta: float = 3.7, **kwargs) -> SolverConfig:
    return SolverConfig(penalty=PenaltyConfig(kind=kind, lam=lam, theta=theta), **kwargs)


def all_positive(n: int, d: int = 2) -> Dataset:
    rng = np.random.default_rng(0)
    return Dataset(features=sp.csr_matrix(rng.standard_normal((n, d))), labels=np.ones(n))


def grid_minimize(g, upper: float, points: int = 200_001) -> float:
    """Smallest value of g on a fine grid over [0, upper]."""
    return float(np.min(g(np.linspace(0.0, upper, points))))


class TestSolverConfig:
    def test_defaults(self, scad_config):
        assert scad_config.rho1 == 1.0
        assert scad_config.rho2 == 1.0
        assert scad_config.beta == 0.0
        assert scad_config.epsilon == 1e-4
        assert scad_config.max_iters == 1000

    @pytest.mark.parametrize(
        "field,value",
        [("rho1", 0.0), ("rho2", -1.0), ("beta", -0.1), ("epsilon", 0.0), ("max_iters", 0)],
    )
    def test_invalid_values_rejected(self, field, value):
        with pytest.raises(ValueError):
            solver(**{field: value})

    def test_seed_does_not_change_fit(self, tall_dataset):
        first = fit(tall_dataset, solver(seed=0, max_iters=20))
        second = fit(tall_dataset, solver(seed=123, max_iters=20))
        np.testing.assert_array_equal(first.model.w, second.model.w)
        assert first.model.b == second.model.b


class TestInitialize:
    def test_shapes_and_values(self, scad_config):
        state = initialize(3, 2, scad_config)
        for name in ("w", "z", "u"):
            np.testing.assert_array_equal(getattr(state, name), np.zeros(2))
        for name in ("s", "v"):
            np.testing.assert_array_equal(getattr(state, name), np.zeros(3))
        np.testing.assert_array_equal(state.xi, np.ones(3))
        assert state.b == 0.0
        assert state.iter == 0

    def test_nonnegative_slacks(self, scad_config):
        state = initialize(5, 4, scad_config)
        assert np.all(state.xi >= 0)
        assert np.all(state.s >= 0)

    def test_initial_objective_is_one(self, scad_config):
        assert objective(initialize(3, 2, scad_config), scad_config) == 1.0

    def test_initial_augmented_lagrangian_is_one(self, tall_dataset):
        cfg = solver(rho1=2.0, rho2=3.0)
        state = initialize(tall_dataset.n_samples, tall_dataset.n_features, cfg)
        assert augmented_lagrangian(state, cfg, HOperator(tall_dataset)) == pytest.approx(1.0)

    def test_rejects_empty_problem(self):
        with pytest.raises(ValueError):
            initialize(0, 3)


class TestUpdateB:
    def test_all_positive_labels(self):
        """Test Hw = 0, xi = s = v = 0 and y = 1 gives b = 1."""
        ds = all_positive(4)
        state = replace(initialize(4, 2), xi=np.zeros(4))
        assert update_b(state, HOperator(ds)) == pytest.approx(1.0)

    def test_balanced_constant_gives_zero(self, tall_dataset):
        n, d = tall_dataset.n_samples, tall_dataset.n_features
        state = replace(initialize(n, d), xi=np.zeros(n), s=np.full(n, 2.5))
        assert update_b(state, HOperator(tall_dataset)) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonality_after_update(self, tall_dataset):
        h = HOperator(tall_dataset)
        state = random_state(tall_dataset.n_samples, tall_dataset.n_features, seed=4)
        b = update_b(state, h)
        assert b_stationarity_residual(state, state.w, b, h) <= 1e-9


class TestUpdateZ:
    def test_beta_zero_is_plain_prox(self, tall_dataset):
        cfg = solver(kind="mcp", lam=0.3, theta=3.0, rho1=1.7)
        state = random_state(tall_dataset.n_samples, tall_dataset.n_features, seed=1)
        expected = prox_vector(state.w + state.u, 1.7, cfg.penalty)
        np.testing.assert_array_equal(update_z(state, cfg), expected)

    def test_huge_beta_keeps_previous_z(self, tall_dataset):
        cfg = solver(beta=1e9)
        state = random_state(tall_dataset.n_samples, tall_dataset.n_features, seed=2)
        np.testing.assert_allclose(update_z(state, cfg), state.z, atol=1e-3)

    def test_beta_matches_scalar_oracle(self, tall_dataset):
        """Test each coordinate minimizes the beta-augmented scalar objective."""
        cfg = solver(kind="scad", lam=0.4, theta=3.7, rho1=1.3, beta=0.6)
        state = random_state(tall_dataset.n_samples, tall_dataset.n_features, seed=3)
        z = update_z(state, cfg)

        for j in range(tall_dataset.n_features):
            p = ProxProblem(psi=state.w[j] + state.u[j], rho1=cfg.rho1, penalty=cfg.penalty)

            def h(t, anchor=state.z[j], p=p):
                return prox_objective(p, t) + cfg.beta / (2 * cfg.rho1) * (t - anchor) ** 2

            oracle = prox_oracle(p, grid_points=4001, beta=cfg.beta, anchor=state.z[j])
            assert h(z[j]) <= h(oracle) + 1e-8


class TestUpdateXi:
    def test_single_sample_example(self):
        """Test n = 1, rho2 = 1 and a zero state give xi = 1 - 1 = 0."""
        ds = Dataset(features=sp.csr_matrix([[1.0]]), labels=np.array([1.0]))
        state = replace(initialize(1, 1), xi=np.zeros(1))
        np.testing.assert_array_equal(update_xi(state, HOperator(ds), solver()), [0.0])

    def test_negative_entries_clamped(self, tall_dataset):
        state = random_state(tall_dataset.n_samples, tall_dataset.n_features, seed=5)
        state = replace(state, v=state.v + 100.0)
        np.testing.assert_array_equal(update_xi(state, HOperator(tall_dataset), solver()), 0.0)

    def test_minimizes_lagrangian_per_coordinate(self, tall_dataset):
        cfg = solver(rho2=0.7)
        h = HOperator(tall_dataset)
        n = tall_dataset.n_samples
        state = random_state(n, tall_dataset.n_features, seed=6)
        xi = update_xi(state, h, cfg)
        c = h.matvec(state.w) + state.b * h.y - state.s - 1.0 + state.v

        for i in range(n):

            def g(t, ci=c[i]):
                return t / n + 0.5 * cfg.rho2 * (ci + t) ** 2

            upper = max(0.0, -c[i]) + 2.0
            assert xi[i] >= 0
            assert g(xi[i]) <= grid_minimize(g, upper) + 1e-10


class TestUpdateS:
    def test_zero_state(self, tall_dataset):
        n, d = tall_dataset.n_samples, tall_dataset.n_features
        state = replace(initialize(n, d), xi=np.zeros(n))
        np.testing.assert_array_equal(update_s(state, HOperator(tall_dataset)), np.zeros(n))

    def test_minimizes_lagrangian_per_coordinate(self, tall_dataset):
        h = HOperator(tall_dataset)
        state = random_state(tall_dataset.n_samples, tall_dataset.n_features, seed=7)
        s = update_s(state, h)
        c = h.matvec(state.w) + state.b * h.y + state.xi - 1.0 + state.v

        assert np.all(s >= 0)
        for i in range(tall_dataset.n_samples):

            def g(t, ci=c[i]):
                return 0.5 * (ci - t) ** 2

            assert g(s[i]) <= grid_minimize(g, max(0.0, c[i]) + 2.0) + 1e-10


class TestUpdateDuals:
    def test_fixed_point(self):
        ds = all_positive(3)
        h = HOperator(ds)
        w = np.array([0.5, -0.25])
        hw = h.matvec(w)
        # s chosen so that H w + b y + xi - s - 1 = 0
        state = SolverState(
            w=w, b=0.2, z=w.copy(), xi=np.ones(3), s=hw + 0.2, u=np.ones(2), v=np.full(3, -1.0)
        )
        u, v = update_duals(state, h)
        np.testing.assert_allclose(u, state.u)
        np.testing.assert_allclose(v, state.v)

    def test_u_adds_w_minus_z(self):
        ds = all_positive(3)
        state = replace(initialize(3, 2), w=np.array([1.0, -1.0]))
        u, _ = update_duals(state, HOperator(ds))
        np.testing.assert_array_equal(u, [1.0, -1.0])

    def test_v_adds_constraint_residual(self, tall_dataset):
        h = HOperator(tall_dataset)
        state = random_state(tall_dataset.n_samples, tall_dataset.n_features, seed=8)
        _, v = update_duals(state, h)
        np.testing.assert_allclose(v - state.v, constraint_residual(state, h))


class TestObjectives:
    def test_objective_penalty_only(self):
        cfg = solver(kind="capped_l1", lam=1.0, theta=1.0)
        state = replace(initialize(2, 2), xi=np.zeros(2), z=np.array([3.0, -0.5]))
        assert objective(state, cfg) == pytest.approx(1.5)

    def test_objective_recomputation(self, tall_dataset):
        cfg = solver(kind="lsp", lam=0.5, theta=1.0)
        state = random_state(tall_dataset.n_samples, tall_dataset.n_features, seed=9)
        expected = state.xi.sum() / state.xi.size + sum(0.5 * np.log1p(abs(z)) for z in state.z)
        assert objective(state, cfg) == pytest.approx(expected)

    def test_true_objective_at_zero(self, tall_dataset, scad_config):
        model = LinearModel(w=np.zeros(tall_dataset.n_features), b=0.0, penalty=scad_config.penalty)
        assert true_objective(model, tall_dataset, scad_config) == pytest.approx(1.0)

    def test_true_objective_separated(self, scad_config):
        ds = two_point_dataset()
        model = LinearModel(w=np.array([2.0]), b=0.0, penalty=scad_config.penalty)
        expected = (scad_config.penalty.theta + 1) * scad_config.penalty.lam**2 / 2
        assert true_objective(model, ds, scad_config) == pytest.approx(expected)

    def test_true_objective_brute_force(self, tall_dataset):
        cfg = solver(kind="mcp", lam=0.2, theta=3.0)
        rng = np.random.default_rng(10)
        model = LinearModel(w=rng.standard_normal(tall_dataset.n_features), b=0.3, penalty=cfg.penalty)
        X = tall_dataset.features.toarray()
        hinge = 0.0
        for x, y in zip(X, tall_dataset.labels):
            hinge += max(0.0, 1.0 - y * (x @ model.w + model.b))
        penalty = 0.0
        for w in model.w:
            a = abs(w)
            penalty += 0.2 * a - a * a / 6.0 if a <= 0.6 else 3.0 * 0.04 / 2.0
        assert true_objective(model, tall_dataset, cfg) == pytest.approx(hinge / len(X) + penalty)

    def test_augmented_lagrangian_recomputation(self, tall_dataset):
        cfg = solver(rho1=1.5, rho2=0.5)
        h = HOperator(tall_dataset)
        state = random_state(tall_dataset.n_samples, tall_dataset.n_features, seed=11)
        H = h.dense()
        r = H @ state.w + state.b * tall_dataset.labels + state.xi - state.s - 1.0
        expected = (
            objective(state, cfg)
            + 0.75 * np.sum((state.w - state.z + state.u) ** 2)
            + 0.25 * np.sum((r + state.v) ** 2)
            - 0.75 * np.sum(state.u**2)
            - 0.25 * np.sum(state.v**2)
        )
        assert augmented_lagrangian(state, cfg, h) == pytest.approx(expected)

    def test_augmented_lagrangian_dual_shift_with_w_equal_z(self, tall_dataset):
        """Test shifting u leaves the value unchanged when w = z."""
        cfg = solver(rho1=2.0)
        h = HOperator(tall_dataset)
        state = random_state(tall_dataset.n_samples, tall_dataset.n_features, seed=12)
        state = replace(state, z=state.w.copy())
        shifted = replace(state, u=state.u + 0.75)
        assert augmented_lagrangian(shifted, cfg, h) == pytest.approx(augmented_lagrangian(state, cfg, h))


class TestFit:
    def test_two_point_separable(self, scad_config):
        ds = two_point_dataset()
        report = fit(ds, scad_config)
        assert report.iterations <= scad_config.max_iters
        assert report.model.accuracy(ds) == 1.0

    def test_report_fields(self, separable_dataset, scad_config):
        report = fit(separable_dataset, scad_config)
        assert report.iterations == len(report.trace)
        assert [r.iter for r in report.trace] == list(range(1, report.iterations + 1))
        assert report.branch is Branch.TALL
        assert report.precompute_seconds >= 0
        assert report.iterate_seconds >= 0
        assert report.final_objective == report.trace[-1].objective
        assert report.true_objective == pytest.approx(
            true_objective(report.model, separable_dataset, scad_config)
        )

    def test_stopping_rule_consistent_with_trace(self, separable_dataset, scad_config):
        report = fit(separable_dataset, scad_config)
        objectives = [1.0] + [r.objective for r in report.trace]
        for k, record in enumerate(report.trace):
            expected = abs(objectives[k + 1] - objectives[k]) / max(abs(objectives[k]), 1e-12)
            assert record.rel_change == pytest.approx(expected)
        assert all(r.rel_change >= scad_config.epsilon for r in report.trace[:-1])
        if report.terminated_by is TerminatedBy.TOLERANCE:
            assert report.trace[-1].rel_change < scad_config.epsilon
        else:
            assert report.iterations == scad_config.max_iters

    def test_max_iters_termination(self, separable_dataset):
        report = fit(separable_dataset, solver(epsilon=1e-300, max_iters=3))
        assert report.iterations == 3
        assert report.terminated_by is TerminatedBy.MAX_ITERS

    def test_callback_sees_every_step_in_order(self, tall_dataset):
        seen = []
        fit(tall_dataset, solver(max_iters=5, epsilon=1e-300), callback=lambda r: seen.append(r))
        assert [r.state.iter for r in seen] == [1, 2, 3, 4, 5]
        for earlier, later in zip(seen, seen[1:]):
            assert later.previous is earlier.state

    @pytest.mark.parametrize("dataset_name", ["tall_dataset", "wide_dataset"])
    @pytest.mark.parametrize("kind,theta", [("scad", 3.7), ("mcp", 3.0), ("lsp", 1.0), ("capped_l1", 1.0)])
    @pytest.mark.parametrize("beta", [0.0, 1e-3])
    def test_iteration_invariants(self, request, dataset_name, kind, theta, beta):
        """Test slack signs, stationarity, primal descent and dual bookkeeping at every step."""
        ds = request.getfixturevalue(dataset_name)
        cfg = solver(kind=kind, lam=0.05, theta=theta, rho1=1.5, rho2=0.8, beta=beta, max_iters=40)
        h = HOperator(ds)
        n = ds.n_samples
        failures = []

        def check(result):
            prev, new = result.previous, result.state
            if np.any(new.xi < 0) or np.any(new.s < 0):
                failures.append(("sign", new.iter))
            if b_stationarity_residual(prev, new.w, new.b, h) > 1e-8 * n:
                failures.append(("b", new.iter))
            tolerance = 1e-6 * (1.0 + np.max(np.abs(result.f)))
            if w_stationarity_residual(prev, new.w, h, cfg) > tolerance:
                failures.append(("w", new.iter))
            frozen = replace(new, u=prev.u, v=prev.v)
            if augmented_lagrangian(frozen, cfg, h) > augmented_lagrangian(prev, cfg, h) + 1e-9:
                failures.append(("descent", new.iter))
            if not np.allclose(new.v - prev.v, result.constraint_residual, atol=1e-12):
                failures.append(("v", new.iter))
            if not np.allclose(new.u - prev.u, new.w - new.z, atol=1e-12):
                failures.append(("u", new.iter))

        fit(ds, cfg, callback=check)
        assert failures == []

    def test_update_order(self, tall_dataset):
        """Test that step reproduces the updates applied one at a time in sequence."""
        cfg = solver(kind="mcp", lam=0.05, theta=3.0, max_iters=1)
        h = HOperator(tall_dataset)
        results = []
        fit(tall_dataset, cfg, callback=results.append)
        prev, new, f = results[0].previous, results[0].state, results[0].f

        w = new.w
        np.testing.assert_allclose(f, admm.assemble_f(prev.z, prev.u, prev.s, prev.xi, prev.v, prev.b, h, 1.0))
        state = replace(prev, w=w)
        state.b = update_b(state, h)
        state.z = update_z(state, cfg)
        state.xi = update_xi(state, h, cfg)
        state.s = update_s(state, h)
        state.u, state.v = update_duals(state, h)

        assert new.b == pytest.approx(state.b)
        for name in ("z", "xi", "s", "u", "v"):
            np.testing.assert_allclose(getattr(new, name), getattr(state, name), atol=1e-12)

    def test_forced_branches_agree(self, tall_dataset):
        cfg = solver(kind="lsp", lam=0.05, theta=1.0, max_iters=5, epsilon=1e-300)
        tall = fit(tall_dataset, cfg, branch=Branch.TALL)
        wide = fit(tall_dataset, cfg, branch=Branch.WIDE)
        assert wide.branch is Branch.WIDE
        np.testing.assert_allclose(tall.model.w, wide.model.w, atol=1e-6)

    def test_fit_is_deterministic(self, separable_dataset, scad_config):
        first = fit(separable_dataset, scad_config)
        second = fit(separable_dataset, scad_config)
        np.testing.assert_array_equal(first.model.w, second.model.w)
        assert [r.objective for r in first.trace] == [r.objective for r in second.trace]

    def test_divergence_detected(self, tall_dataset, scad_config, monkeypatch):
        monkeypatch.setattr(admm, "solve_w", lambda cache, h, f: np.full(f.shape, np.nan))
        with pytest.raises(DivergenceError) as exc_info:
            fit(tall_dataset, scad_config)
        assert exc_info.value.variable == "w"
        assert "iteration 1" in str(exc_info.value)

    def test_model_carries_zero_tolerance(self, tall_dataset, scad_config):
        report = fit(tall_dataset, scad_config, zero_tolerance=1e-3)
        assert report.model.zero_tolerance == 1e-3
        assert report.model.penalty == scad_config.penalty


class TestAccuracyCurve:
    @pytest.fixture
    def split(self, separable_dataset):
        return stratified_split(separable_dataset, SplitSpec(0.25, seed=0))

    def test_every_record_scored(self, split, scad_config):
        train, test = split
        report = fit(train, scad_config, eval_data=test)

        accuracies = [r.test_accuracy for r in report.trace]
        assert all(0.0 <= a <= 1.0 for a in accuracies)
        assert accuracies[-1] == report.model.accuracy(test)

    def test_wall_time_nondecreasing(self, split, scad_config):
        train, test = split
        report = fit(train, scad_config, eval_data=test)
        times = np.array([r.wall_time for r in report.trace])
        assert np.all(times >= 0.0)
        assert np.all(np.diff(times) >= 0.0)
        assert times[-1] <= report.iterate_seconds + 1e-9

    def test_scoring_leaves_iterates_unchanged(self, split, scad_config):
        train, test = split
        scored = fit(train, scad_config, eval_data=test)
        plain = fit(train, scad_config)
        np.testing.assert_array_equal(scored.model.w, plain.model.w)
        assert all(np.isnan(r.test_accuracy) for r in plain.trace)

    def test_narrower_eval_data_is_padded(self, split, scad_config):
        train, test = split
        narrow = Dataset(features=test.features[:, :2], labels=test.labels)
        report = fit(train, scad_config, eval_data=narrow)
        assert report.trace[-1].test_accuracy == report.model.accuracy(narrow)

    def test_wider_eval_data_rejected(self, split, scad_config):
        train, test = split
        wide = Dataset(features=sp.hstack([test.features, test.features]).tocsr(), labels=test.labels)
        with pytest.raises(DimensionMismatchError):
            fit(train, scad_config, eval_data=wide)


class TestExports:
    def test_trace_csv(self, tmp_path, separable_dataset, scad_config):
        report = fit(separable_dataset, scad_config)
        path = tmp_path / "trace.csv"
        write_trace_csv(report, path)

        with open(path, newline="") as stream:
            rows = list(csv.reader(stream))
        assert rows[0] == [
            "iter",
            "objective",
            "rel_change",
            "res_wz",
            "res_cons",
            "state_delta",
            "test_accuracy",
            "wall_time_s",
        ]
        assert rows[1][6] == "nan"
        assert len(rows) == report.iterations + 1
        assert float(rows[1][1]) == report.trace[0].objective

    def test_trace_csv_reproducible(self, tmp_path, separable_dataset, scad_config):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for path in paths:
            write_trace_csv(fit(separable_dataset, scad_config), path)

        def deterministic_columns(path):
            with open(path, newline="") as stream:
                return [row[:-1] for row in csv.reader(stream)]

        assert deterministic_columns(paths[0]) == deterministic_columns(paths[1])

    def test_report_json(self, tmp_path, separable_dataset, scad_config):
        report = fit(separable_dataset, scad_config)
        path = tmp_path / "report.json"
        write_report_json(report, path)

        data = json.loads(path.read_text())
        assert data["iterations"] == report.iterations
        assert data["terminated_by"] in ("tolerance", "max_iters")
        assert data["branch"] == "tall"
        assert set(data) >= {"model", "precompute_seconds", "iterate_seconds", "trace"}
        assert data["model"]["penalty"] == {"kind": "scad", "lambda": 2.0**-6, "theta": 3.7}
        assert len(data["trace"]) == report.iterations
