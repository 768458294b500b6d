import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obslab import (
    ZOH,
    ConfigurationError,
    ConstantInput,
    ConstantMinusQ,
    CustomGain,
    InterSamplePredictor,
    ObserverSpec,
    PlantModel,
    SinusoidInput,
    TabulatedInput,
    ZeroInput,
    ZOHExpGain,
    builtin_linear,
    builtin_oscillator,
    observer_rhs,
    predictor_rhs,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
vec2 = st.tuples(finite, finite).map(np.array)
vec1 = st.tuples(finite).map(np.array)


def pendulum():
    """Nonlinear test plant with a nonlinear output map."""
    model = PlantModel(
        n=2, m=1, p=1,
        f=lambda x, u: np.array([x[1], -np.sin(x[0]) - 0.1 * x[1] + u[0]]),
        h=lambda x: np.array([np.sin(x[0]) + 0.5 * x[1] ** 2]),
        grad_h=lambda x: np.array([[np.cos(x[0]), x[1]]]),
    )
    g = lambda z, w, u: np.array([[1.0 + 0.1 * z[0] ** 2], [0.5]])
    return model, ObserverSpec(g=g, K=InterSamplePredictor())


def test_oscillator_observer_rhs_matches_closed_form():
    model, spec = builtin_oscillator()
    for z1, z2, w, u in [(1.0, 0.0, 0.0, 0.0), (0.3, -1.2, 2.0, 0.7), (-4.0, 5.0, 1.5, -2.0)]:
        expected = [-2 * z1 + z2 + 2 * w, -2 * z1 + u + w]
        np.testing.assert_allclose(observer_rhs(model, spec, [z1, z2], [w], [u]), expected, rtol=0, atol=1e-14)


def test_oscillator_observer_rhs_hand_value():
    model, spec = builtin_oscillator()
    np.testing.assert_array_equal(observer_rhs(model, spec, [1.0, 0.0], [0.0], [0.0]), [-2.0, -2.0])


@pytest.mark.parametrize("q", [-1.0, 0.0, 0.8, 2.0])
def test_oscillator_predictor_rhs_constant_minus_q(q):
    model, spec = builtin_oscillator(q)
    z1, z2, w = 0.7, -0.4, 1.9
    assert predictor_rhs(model, spec, [z1, z2], [w], [0.3])[0] == pytest.approx(z2 + q * (w - z1), abs=1e-14)


def test_zoh_on_oscillator_equals_q_two():
    model, spec = builtin_oscillator()
    zoh = spec.with_gain(ZOH())
    q2 = spec.with_gain(ConstantMinusQ(2.0))
    rng = np.random.default_rng(3)
    for _ in range(20):
        z, w, u = rng.normal(size=2), rng.normal(size=1), rng.normal(size=1)
        np.testing.assert_allclose(predictor_rhs(model, zoh, z, w, u), predictor_rhs(model, q2, z, w, u),
                                   atol=1e-14)


def test_builtin_oscillator_maps():
    model, _ = builtin_oscillator()
    np.testing.assert_array_equal(model.f(np.array([1.0, 0.0]), np.array([0.0])), [0.0, -1.0])
    np.testing.assert_array_equal(model.h(np.array([3.0, 7.0])), [3.0])
    np.testing.assert_array_equal(model.grad_h(np.array([3.0, 7.0])), [[1.0, 0.0]])
    assert (model.n, model.m, model.p) == (2, 1, 1)
    assert isinstance(builtin_oscillator()[1].K, ConstantMinusQ)
    assert builtin_oscillator()[1].K.q == 0.8


def test_builtin_linear_reproduces_oscillator():
    lin, lspec = builtin_linear([[0, 1], [-1, 0]], [[0], [1]], [[1, 0]], [[2], [1]], K=ConstantMinusQ(0.8))
    osc, ospec = builtin_oscillator(0.8)
    rng = np.random.default_rng(0)
    for _ in range(10):
        z, w, u = rng.normal(size=2), rng.normal(size=1), rng.normal(size=1)
        np.testing.assert_array_equal(observer_rhs(lin, lspec, z, w, u), observer_rhs(osc, ospec, z, w, u))
        np.testing.assert_array_equal(predictor_rhs(lin, lspec, z, w, u), predictor_rhs(osc, ospec, z, w, u))


def test_builtin_linear_zero_dynamics():
    model, _ = builtin_linear([[0.0, 0.0], [0.0, 0.0]], [[0.0], [0.0]], [[1.0, 0.0]], [[1.0], [0.0]])
    np.testing.assert_array_equal(model.f(np.array([3.0, -2.0]), np.array([5.0])), [0.0, 0.0])


def test_builtin_linear_scalar():
    model, spec = builtin_linear([[1.0]], [[0.0]], [[1.0]], [[2.0]])
    z, w = 0.7, -1.1
    assert observer_rhs(model, spec, [z], [w], [0.0])[0] == pytest.approx(z + 2 * (w - z))


def test_builtin_linear_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        builtin_linear([[0, 1], [-1, 0]], [[0], [1]], [[1, 0, 0]], [[2], [1]])
    with pytest.raises(ConfigurationError):
        builtin_linear([[0, 1], [-1, 0]], [[0], [1]], [[1, 0]], [[2], [1], [0]])
    with pytest.raises(ConfigurationError):
        builtin_linear([[0, 1, 2], [-1, 0, 3]], [[0], [1]], [[1, 0]], [[2], [1]])


def test_rhs_dimension_mismatch():
    model, spec = builtin_oscillator()
    with pytest.raises(ConfigurationError):
        observer_rhs(model, spec, [1.0, 0.0, 0.0], [0.0], [0.0])
    with pytest.raises(ConfigurationError):
        predictor_rhs(model, spec, [1.0, 0.0], [0.0, 1.0], [0.0])
    with pytest.raises(ConfigurationError):
        predictor_rhs(model, spec, [1.0, 0.0], [0.0], [0.0, 0.0])


def test_custom_gain_shape_checked():
    model, spec = builtin_oscillator()
    bad = spec.with_gain(CustomGain(lambda z, w, u: np.eye(2)))
    with pytest.raises(ConfigurationError):
        predictor_rhs(model, bad, [0.0, 0.0], [1.0], [0.0])


def test_negative_eta_rejected():
    with pytest.raises(ConfigurationError):
        ZOHExpGain(-0.1)


@pytest.mark.parametrize("make", [builtin_oscillator, pendulum])
@given(z=vec2, w=vec1, u=vec1, eta=st.floats(0, 10), q=finite)
@settings(max_examples=50, deadline=None)
def test_presets_equal_custom_maps(make, z, w, u, eta, q):
    model, spec = make()
    gz = spec.g(z, w, u)
    dh = model.grad_h(z)
    pairs = [
        (ZOH(), lambda z_, w_, u_: -(dh @ gz)),
        (ZOHExpGain(eta), lambda z_, w_, u_: -(dh @ gz) + eta * np.eye(1)),
        (InterSamplePredictor(), lambda z_, w_, u_: np.zeros((1, 1))),
        (ConstantMinusQ(q), lambda z_, w_, u_: -q * np.eye(1)),
    ]
    for preset, custom in pairs:
        a = predictor_rhs(model, spec.with_gain(preset), z, w, u)
        b = predictor_rhs(model, spec.with_gain(CustomGain(custom)), z, w, u)
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("make", [builtin_oscillator, pendulum])
@given(z=vec2, u=vec1, eta=st.floats(0, 10), q=finite)
@settings(max_examples=50, deadline=None)
def test_innovation_nullity(make, z, u, eta, q):
    model, spec = make()
    w = model.h(z)
    for K in (ZOH(), ZOHExpGain(eta), InterSamplePredictor(), ConstantMinusQ(q)):
        s = spec.with_gain(K)
        np.testing.assert_array_equal(observer_rhs(model, s, z, w, u), model.f(z, u))
        np.testing.assert_array_equal(predictor_rhs(model, s, z, w, u), model.grad_h(z) @ model.f(z, u))


def central_jacobian(h, x, eps=1e-6):
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        cols.append((h(x + e) - h(x - e)) / (2 * eps))
    return np.column_stack(cols)


@pytest.mark.parametrize("make", [
    builtin_oscillator,
    lambda: builtin_linear([[0, 1, 0], [0, 0, 1], [-1, -2, -3]], [[0], [0], [1]],
                           [[1, 0, 0], [0, 1, 1]], [[1, 0], [0, 1], [1, 1]]),
])
def test_grad_h_matches_finite_differences(make):
    model, _ = make()
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = rng.uniform(-10, 10, size=model.n)
        fd = central_jacobian(model.h, x)
        exact = model.grad_h(x)
        assert np.max(np.abs(fd - exact)) <= 1e-6 * max(1.0, np.max(np.abs(exact)))


class TestInputs:
    def test_zero(self):
        np.testing.assert_array_equal(ZeroInput(2)(3.0), [0.0, 0.0])

    def test_constant(self):
        np.testing.assert_array_equal(ConstantInput([1.5, -2.0])(10.0), [1.5, -2.0])

    def test_sinusoid(self):
        s = SinusoidInput([2.0], 3.0, 0.5)
        assert s(1.2)[0] == pytest.approx(2.0 * np.sin(3.0 * 1.2 + 0.5))

    def test_tabulated_piecewise_constant(self):
        tab = TabulatedInput([0.0, 1.0, 2.5], [[1.0], [-1.0], [4.0]])
        assert tab(0.0)[0] == 1.0
        assert tab(0.999)[0] == 1.0
        assert tab(1.0)[0] == -1.0
        assert tab(2.49)[0] == -1.0
        assert tab(2.5)[0] == 4.0
        assert tab(1e6)[0] == 4.0

    def test_tabulated_rejects_unsorted(self):
        with pytest.raises(ConfigurationError):
            TabulatedInput([0.0, 2.0, 1.0], [[1.0], [2.0], [3.0]])
