import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal, norm

from phimi import (
    BoundsError,
    ExpBilinearModel,
    FgmCopulaModel,
    FiniteDiscreteModel,
    LengthMismatchError,
    ParamVector,
    SupportError,
    gaussian_model,
    gaussian_ratio_coefficients,
    h_eval,
    h_grad,
    model_from_config,
    model_to_config,
    rank_transform,
)
from phimi.models import BasisPair

MODELS = {
    "expbilinear": lambda: ExpBilinearModel(["x", "y", "xy"]),
    "gaussian": gaussian_model,
    "finite": lambda: FiniteDiscreteModel(["a", "b"], ["c", "d", "e"]),
    "fgm": FgmCopulaModel,
}


def random_points(model, rng, size):
    if isinstance(model, FiniteDiscreteModel):
        x = rng.choice(np.asarray(model.levels_x, dtype=object), size)
        y = rng.choice(np.asarray(model.levels_y, dtype=object), size)
    elif isinstance(model, FgmCopulaModel):
        x, y = rng.random(size), rng.random(size)
    else:
        x, y = rng.standard_normal(size), rng.standard_normal(size)
    return x, y


class TestParamVector:
    def test_round_trip_with_alpha(self):
        pv = ParamVector(0.5, (1.0, -2.0))
        arr = pv.to_array()
        assert arr.tolist() == [0.5, 1.0, -2.0]
        assert ParamVector.from_array(arr, has_alpha=True) == pv

    def test_round_trip_without_alpha(self):
        pv = ParamVector(None, (0.3,))
        assert pv.to_array().tolist() == [0.3]
        assert ParamVector.from_array([0.3], has_alpha=False) == pv
        assert len(pv) == 1


class TestHEval:
    @pytest.mark.parametrize("name", sorted(MODELS))
    def test_h_is_one_at_theta0(self, name):
        model = MODELS[name]()
        rng = np.random.default_rng(0)
        x, y = random_points(model, rng, 100)
        vals = np.atleast_1d(model.h(model.theta0, x, y))
        assert np.allclose(vals, 1.0, atol=1e-14)

    def test_fgm_at_corner(self):
        model = FgmCopulaModel(theta_bounds=(-1.0, 1.0))
        assert h_eval(model, [1.0], 0.0, 0.0) == pytest.approx(2.0)

    def test_finite_exponent_cell(self):
        model = FiniteDiscreteModel([1, 2], [1, 2])
        theta = np.zeros(4)
        theta[3] = np.log(2.0)  # beta for cell (a2, b2)
        assert model.h(theta, 2, 2) == pytest.approx(2.0)
        assert model.h(theta, 1, 1) == pytest.approx(1.0)

    def test_positivity(self):
        rng = np.random.default_rng(1)
        for name in MODELS:
            model = MODELS[name]()
            x, y = random_points(model, rng, 50)
            theta = rng.uniform(model.bounds[:, 0] * 0.05, model.bounds[:, 1] * 0.05)
            assert np.all(np.atleast_1d(model.h(theta, x, y)) > 0.0)

    def test_bounds_error(self):
        model = ExpBilinearModel(["xy"])
        with pytest.raises(BoundsError):
            model.h([0.0, 11.0], 0.0, 0.0)
        with pytest.raises(BoundsError):
            model.h([0.0], 0.0, 0.0)  # wrong length

    def test_support_error(self):
        model = FiniteDiscreteModel(["a", "b"], ["c", "d"])
        with pytest.raises(SupportError):
            model.h(model.theta0, "z", "c")
        fgm = FgmCopulaModel()
        with pytest.raises(SupportError):
            fgm.h([0.1], 1.5, 0.5)


class TestHGrad:
    def test_exp_at_theta0_equals_features(self):
        model = ExpBilinearModel(["x", "y", "xy"])
        g = h_grad(model, model.theta0, 2.0, 3.0)
        assert np.allclose(g, [1.0, 2.0, 3.0, 6.0])

    def test_fgm_example(self):
        model = FgmCopulaModel()
        g = h_grad(model, [0.0], 0.25, 0.25)
        assert np.allclose(g, [0.25])

    @pytest.mark.parametrize("name", sorted(MODELS))
    def test_matches_finite_differences(self, name):
        model = MODELS[name]()
        rng = np.random.default_rng(42)
        h_step = 1e-5
        for _ in range(20):
            x, y = random_points(model, rng, 1)
            lo = np.maximum(model.bounds[:, 0], -0.9)
            hi = np.minimum(model.bounds[:, 1], 0.9)
            theta = rng.uniform(lo, hi)
            grad = np.atleast_1d(np.squeeze(model.h_grad(theta, x, y)))
            fd = np.empty_like(grad)
            for k in range(model.dim):
                dt = np.zeros(model.dim)
                dt[k] = h_step
                fd[k] = (model.h(theta + dt, x, y)[0] - model.h(theta - dt, x, y)[0]) / (2 * h_step)
            assert np.allclose(grad, fd, rtol=1e-5, atol=1e-7)


class TestRankTransform:
    def test_basic_ranks(self):
        m = rank_transform([3.0, 1.0, 2.0], [1.0, 2.0, 3.0])
        assert np.allclose(m.u, [0.75, 0.25, 0.50])
        assert np.allclose(m.v, [0.25, 0.50, 0.75])

    def test_mid_ranks_for_ties(self):
        m = rank_transform([1.0, 1.0], [1.0, 2.0])
        assert np.allclose(m.u, [0.5, 0.5])

    def test_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(3)
        m = rank_transform(rng.standard_normal(200), rng.standard_normal(200))
        assert np.all((m.u > 0) & (m.u < 1))
        assert np.all((m.v > 0) & (m.v < 1))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            rank_transform([1.0, 2.0], [1.0])

    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_invariant_under_increasing_transform(self, xs):
        xs = np.asarray(xs)
        # exp must not merge values that were distinct (float resolution)
        assume(np.unique(np.exp(xs / 25.0)).size == np.unique(xs).size)
        ys = np.arange(xs.size, dtype=float)
        before = rank_transform(xs, ys)
        after = rank_transform(np.exp(xs / 25.0), ys)
        assert np.allclose(before.u, after.u)


class TestGaussianModel:
    def test_theta0_gives_one(self):
        model = gaussian_model()
        assert model.h(model.theta0, 0.7, -1.2) == pytest.approx(1.0)

    def test_matches_density_ratio(self):
        rho, sigma = 0.6, 1.3
        model = gaussian_model()
        theta = gaussian_ratio_coefficients(rho, sigma).to_array()
        cov = sigma**2 * np.array([[1.0, rho], [rho, 1.0]])
        joint = multivariate_normal(mean=[0.0, 0.0], cov=cov)
        rng = np.random.default_rng(7)
        for _ in range(10):
            x, y = rng.uniform(-2.0, 2.0, 2)
            direct = joint.pdf([x, y]) / (
                norm.pdf(x, scale=sigma) * norm.pdf(y, scale=sigma))
            assert model.h(theta, x, y) == pytest.approx(direct, rel=1e-10)

    def test_zero_correlation_gives_zero_coefficients(self):
        pv = gaussian_ratio_coefficients(0.0)
        assert pv.alpha == 0.0
        assert pv.beta == (0.0, 0.0, 0.0)


class TestIdentifiability:
    @pytest.mark.parametrize("name", sorted(MODELS))
    def test_distinct_theta_distinct_h(self, name):
        model = MODELS[name]()
        rng = np.random.default_rng(11)
        x, y = random_points(model, rng, 200)
        lo = np.maximum(model.bounds[:, 0], -1.0)
        hi = np.minimum(model.bounds[:, 1], 1.0)
        thetas = [rng.uniform(lo, hi) for _ in range(6)]
        evals = [np.atleast_1d(model.h(t, x, y)) for t in thetas]
        for i in range(len(thetas)):
            for j in range(i + 1, len(thetas)):
                assert np.max(np.abs(evals[i] - evals[j])) > 1e-8


class TestSerialization:
    def test_expbilinear_round_trip(self):
        model = ExpBilinearModel(["x2", "y2", "xy"], beta_bounds=(-5.0, 5.0))
        text = model_to_config(model)
        back = model_from_config(text)
        assert isinstance(back, ExpBilinearModel)
        assert [p.name for p in back.basis] == ["x2", "y2", "xy"]
        assert np.allclose(back.bounds, model.bounds)

    def test_finite_round_trip(self):
        model = FiniteDiscreteModel(["a", "b", "c"], ["u", "v"])
        back = model_from_config(model_to_config(model))
        assert back.levels_x == ("a", "b", "c")
        assert back.levels_y == ("u", "v")
        assert back.dim == model.dim

    def test_fgm_round_trip(self):
        back = model_from_config(model_to_config(FgmCopulaModel()))
        assert isinstance(back, FgmCopulaModel)
        assert np.allclose(back.bounds, [[-0.999, 0.999]])

    def test_custom_basis_not_serializable(self):
        pair = BasisPair("sinx", lambda x: np.sin(x), lambda y: np.ones_like(y))
        model = ExpBilinearModel([pair])
        with pytest.raises(ValueError):
            model_to_config(model)

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            model_from_config("family=weird")


def test_finite_dimension_and_theta0():
    model = FiniteDiscreteModel([1, 2, 3], [1, 2])
    assert model.dim == 1 + (3 * 2 - 1)
    assert np.all(model.theta0 == 0.0)
    assert model.h(model.theta0, 3, 2) == pytest.approx(1.0)


def test_fgm_bounds_must_stay_in_unit_interval():
    with pytest.raises(ValueError):
        FgmCopulaModel(theta_bounds=(-1.5, 0.5))
