import math

import numpy as np
import pytest

from hololearn.legendre import DiscreteNorm, eval_Psi, psi_matrix
from hololearn.multiindex import IndexSet, MultiIndex, weighted_cardinality
from hololearn.neural import (MLP, CalibrationError, NonFiniteLossError, TrainConfig, assemble_family_network,
                              build_identity_emulator, build_interpolating_minimizer, build_legendre_emulator,
                              build_product_tree, build_square_emulator, constant_network, finite_difference_grad,
                              forward, init_he_uniform, loss_and_grad, measure_emulator_error, null_vector,
                              square_network, train)
from hololearn.operators import TrainingSet
from hololearn.polyfit import assemble_design, least_squares_fit

e1, e2 = MultiIndex.unit(1), MultiIndex.unit(2)


def data_set(X, Y):
    return TrainingSet(np.asarray(X, float), np.asarray(Y, float), 0.0, 0)


def test_forward_examples():
    net = MLP((2, 3, 1))
    np.testing.assert_array_equal(forward(net, [0.4, -0.2]), [0.0])
    net.b[-1][0] = 0.7
    np.testing.assert_array_equal(forward(net, np.zeros((5, 2))), np.full((5, 1), 0.7))
    one = MLP.from_layers([np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    assert forward(one, [0.5])[0] == pytest.approx(math.tanh(0.5), rel=1e-15)
    with pytest.raises(ValueError):
        forward(net, [0.1, 0.2, 0.3])


def test_param_count_and_shapes():
    net = MLP((4, 40, 40, 40, 40, 65))
    assert net.depth == 4 and net.width == 40
    assert net.n_params == 4 * 40 + 40 + 3 * (40 * 40 + 40) + 40 * 65 + 65
    init_he_uniform(net, 3)
    for W in net.W:
        assert np.max(np.abs(W)) <= math.sqrt(6 / W.shape[1])
    other = init_he_uniform(MLP(net.layer_dims), 3)
    np.testing.assert_array_equal(other.theta, net.theta)


@pytest.mark.parametrize("act", ["tanh", "relu", "elu"])
@pytest.mark.parametrize("kind", [None, "weighted-l4"])
def test_gradient_matches_finite_differences(act, kind):
    rng = np.random.default_rng(11)
    net = init_he_uniform(MLP((3, 5, 4, 2), act), 1)
    X = rng.uniform(-1, 1, (7, 3))
    Y = rng.standard_normal((7, 2))
    norm = None if kind is None else DiscreteNorm(kind, np.array([0.3, 0.7]))
    if act == "relu":
        # keep every pre-activation away from the kink
        H = X
        for W, b in zip(net.W[:-1], net.b[:-1]):
            Z = H @ W.T + b
            assert np.min(np.abs(Z)) > 1e-4
            H = np.maximum(Z, 0)
    _, g = loss_and_grad(net, X, Y, norm)
    fd = finite_difference_grad(net, X, Y, norm, step=1e-6)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_linear_network_reaches_least_squares():
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, (40, 3))
    Y = X @ rng.standard_normal((3, 2)) + 0.1 * rng.standard_normal((40, 2))
    A = np.column_stack([X, np.ones(40)])
    sol = np.linalg.lstsq(A, Y, rcond=None)[0]
    best = float(np.mean(np.sum((A @ sol - Y) ** 2, axis=1)))
    net = MLP((3, 2))
    cfg = TrainConfig(epochs=20000, lr_init=1e-2, lr_final=1e-4, tol=0.0)
    net, trace = train(net, data_set(X, Y), cfg=cfg)
    assert trace.final_loss - best <= 1e-6
    np.testing.assert_allclose(net.W[0].T, sol[:3], atol=1e-3)


def test_training_on_self_generated_data():
    rng = np.random.default_rng(2)
    teacher = init_he_uniform(MLP((2, 6, 1)), 7)
    X = rng.uniform(-1, 1, (30, 2))
    data = data_set(X, forward(teacher, X))
    student = init_he_uniform(MLP((2, 6, 1)), 8)
    start, _ = loss_and_grad(student, X, data.Y)
    student, trace = train(student, data, cfg=TrainConfig(epochs=3000, tol=0.0), record_every=1)
    assert trace.final_loss <= start
    losses = [l for _, l in trace.losses]
    assert min(losses) <= losses[0]
    assert trace.final_loss <= losses[-1] + 1e-15
    assert trace.checkpoint_loss >= trace.final_loss
    teacher_loss, _ = loss_and_grad(teacher, X, data.Y)
    assert teacher_loss == 0.0


def test_tolerance_stops_early():
    X = np.zeros((3, 1))
    net = MLP((1, 2, 1))
    net, trace = train(net, data_set(X, np.zeros((3, 1))), cfg=TrainConfig(epochs=100))
    assert trace.epochs_run == 1 and trace.final_loss == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_loss_raises():
    net = MLP((1, 2, 1))
    net.W[0][...] = 1e300
    net.W[1][...] = 1e300
    data = data_set([[1.0]], [[np.inf]])
    with pytest.raises(NonFiniteLossError):
        train(net, data, cfg=TrainConfig(epochs=5))


def test_text_roundtrip():
    net = init_he_uniform(MLP((3, 4, 4, 2), "elu"), 4)
    back = MLP.from_text(net.to_text())
    assert back.layer_dims == net.layer_dims and back.activation == "elu"
    np.testing.assert_array_equal(back.theta, net.theta)


def test_square_unit_examples():
    sq = build_square_emulator(1e-4)
    x = np.linspace(-1, 1, 10001)
    assert np.max(np.abs(sq(x) - x * x)) <= 1e-4
    assert sq(0.0) == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(forward(square_network(sq), x[:, None])[:, 0], sq(x), atol=1e-9)
    ident = build_identity_emulator(1e-5)
    assert np.max(np.abs(ident(x) - x)) <= 1e-5
    with pytest.raises(CalibrationError):
        build_square_emulator(1e-12, 2.0)
    with pytest.raises(ValueError):
        build_square_emulator(0.0)


def test_product_tree_examples():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3, 5):
        tree = build_product_tree(n, 1e-3)
        net = tree.network()
        X = rng.uniform(-1, 1, (2000, n))
        assert np.max(np.abs(forward(net, X)[:, 0] - np.prod(X, axis=1))) <= 1e-3
    net = build_product_tree(2, 1e-3).network()
    assert forward(net, [0.0, 0.9])[0] == pytest.approx(0.0, abs=1e-3)


def test_legendre_emulator_examples():
    em = build_legendre_emulator(e1, 1e-3, n_cert=4096)
    x = np.linspace(-1, 1, 2001)[:, None]
    assert np.max(np.abs(em(x) - math.sqrt(3) * x[:, 0])) <= 1e-3
    const = build_legendre_emulator(MultiIndex.zero(), 1e-3, d=3)
    assert np.all(const(np.random.default_rng(0).uniform(-1, 1, (10, 3))) == 1.0)
    assert constant_network(2, 2.5)([0.1, 0.2])[0] == 2.5


@pytest.mark.parametrize("nu", [MultiIndex({1: 2, 2: 1}), MultiIndex.unit(2, 3), MultiIndex({1: 1, 3: 1})])
def test_legendre_emulator_fresh_points(nu):
    delta = 1e-3
    em = build_legendre_emulator(nu, delta, d=3, n_cert=8192, seed=0)
    assert em.measured_error <= delta
    X = np.random.default_rng(99).uniform(-1, 1, (20000, 3))
    exact = np.array([eval_Psi(nu, x) for x in X[:500]])
    assert np.max(np.abs(em(X[:500]) - exact)) <= 2 * delta
    assert measure_emulator_error(nu, em.net, 3, 4096, seed=5) <= 2 * delta


def test_legendre_emulator_padded_depth():
    em = build_legendre_emulator(e1, 1e-3, d=2, depth=3, n_cert=4096)
    assert em.depth == 3 and em.measured_error <= 1e-3


def _padded(C, S):
    ncol = math.floor(weighted_cardinality(S, "v"))
    return np.hstack([C, np.zeros((C.shape[0], ncol - C.shape[1]))])


def test_family_network_examples():
    S = IndexSet([MultiIndex.zero(), e1, e2])
    zero = assemble_family_network(S, _padded(np.zeros((2, 3)), S), 1e-3, d=2, n_cert=2048)
    X = np.random.default_rng(1).uniform(-1, 1, (50, 2))
    assert np.all(zero(X) == 0)
    C = np.array([[1.0, 0.5, -0.2], [0.0, 1.0, 0.3]])
    fam = assemble_family_network(S, _padded(C, S), 1e-3, d=2, n_cert=2048)
    assert fam.n_zero == math.floor(weighted_cardinality(S, "v")) - 3
    exact = psi_matrix(S, X) @ C.T
    assert np.max(np.abs(fam(X) - exact)) <= 2 * 1e-3 * np.max(np.abs(C).sum(axis=1))
    with pytest.raises(ValueError):
        assemble_family_network(S, C, 1e-3, d=2)
    with pytest.raises(ValueError):
        assemble_family_network(S, C, 1e-3, k=2.0, d=2)


def test_family_network_sums_members():
    S = IndexSet([e1, MultiIndex.unit(1, 2)])
    C = np.array([[0.7, -1.1]])
    fam = assemble_family_network(S, _padded(C, S), 1e-3, d=1, n_cert=2048)
    X = np.linspace(-1, 1, 33)[:, None]
    members = sum(C[0, i] * em(X) for i, em in enumerate(fam.emulators))
    np.testing.assert_allclose(fam(X)[:, 0], members, atol=1e-12)


def test_null_vector_examples():
    B = np.array([[1.0, 1.0]])
    z = null_vector(B)
    assert abs(abs(z[0]) - 1 / math.sqrt(2)) <= 1e-15 and z[0] == pytest.approx(-z[1], abs=1e-15)
    rng = np.random.default_rng(0)
    B = rng.standard_normal((5, 9))
    z = null_vector(B, 3)
    assert np.linalg.norm(B @ z) <= 1e-12 and np.linalg.norm(z) == pytest.approx(1.0)
    with pytest.raises(np.linalg.LinAlgError):
        null_vector(np.eye(3))


def _minimizer_problem(m=6, r=8, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (m, r))
    Y = np.column_stack([np.sin(X[:, 0]) + X[:, 1] ** 2, np.cos(X[:, -1])])
    data = data_set(X, Y)
    Lam = IndexSet([MultiIndex.zero(), e1, e2])
    fit = least_squares_fit(assemble_design(Lam, X), Y)
    return data, fit


def test_interpolating_minimizer_examples():
    data, fit = _minimizer_problem()
    mins = [build_interpolating_minimizer(fit, data, 8, zs, n_cert=2048) for zs in (0.0, 2.0**-10)]
    for mn in mins:
        assert mn.residual <= 1e-8
        loss, _ = loss_and_grad(mn.net, data.X, data.Y)
        assert loss <= 1e-15
        assert np.linalg.norm(mn.B @ mn.z) <= 1e-12
    assert not np.array_equal(mins[0].net.theta, mins[1].net.theta)
    with pytest.raises(ValueError):
        build_interpolating_minimizer(fit, data, 6, 0.0)


def test_interpolating_minimizer_single_sample():
    data, fit = _minimizer_problem(m=1, r=2)
    mn = build_interpolating_minimizer(fit, data, 2, 0.0, n_cert=2048)
    b = mn.B[0]
    assert abs(abs(mn.z @ b) / np.linalg.norm(b)) <= 1e-12
    np.testing.assert_allclose(np.abs(mn.z), np.abs([b[1], -b[0]]) / np.linalg.norm(b), atol=1e-12)
    assert mn.residual <= 1e-8
