import math

import numpy as np
import pytest

from hololearn.legendre import DiscreteNorm
from hololearn.operators import (CoefficientField, ConfigError, EncoderDecoder, InvalidFieldError, OperatorOracle,
                                 TrainingSet, custom_affine_field, encoder_decoder_error_terms, eval_coefficient,
                                 format_config_text, generate_training_set, holomorphy_sequence, l2_grid_norm,
                                 oracle_from_config, parse_config_text, solve_diffusion_1d, synthetic_affine_family)
from hololearn.quadrature import smolyak

CFG = {"family": "affine-a1", "d": 4, "K": 65, "noise": 0.0, "norm": "weighted-euclidean", "source": 10.0}


def const_field(c):
    return lambda z, X: np.full((np.atleast_2d(X).shape[0], len(z)), float(c))


def test_coefficient_examples():
    a1 = CoefficientField("affine-a1", 3)
    np.testing.assert_allclose(eval_coefficient(a1, np.linspace(0, 1, 7), np.zeros(3)), 2.62, rtol=1e-15)
    a1d1 = CoefficientField("affine-a1", 1)
    assert eval_coefficient(a1d1, 0.5, [1.0]) == pytest.approx(3.62, rel=1e-15)
    a2 = CoefficientField("log-a2", 5)
    np.testing.assert_allclose(eval_coefficient(a2, np.linspace(0, 1, 5), np.zeros(5)), math.e, rtol=1e-15)


def test_affine_positive_and_holomorphy():
    a1 = CoefficientField("affine-a1", 10)
    np.testing.assert_allclose(a1.holomorphy_b, np.arange(1, 11) ** -1.5)
    X = np.random.default_rng(0).uniform(-1, 1, (200, 10))
    assert np.min(a1.evaluate(np.linspace(0, 1, 101), X)) >= a1.r_min > 0


def test_custom_field_rejects_nonpositive():
    fld = custom_affine_field(0.5, [lambda z: np.ones_like(z)])
    with pytest.raises(InvalidFieldError):
        solve_diffusion_1d(fld, [-1.0], 1.0, 33)


def test_diffusion_examples():
    u = solve_diffusion_1d(const_field(1.0), np.zeros(1), 1.0, 1025)
    z = np.linspace(0, 1, 1025)
    np.testing.assert_allclose(u, z * (1 - z) / 2, atol=1e-14)
    assert l2_grid_norm(u) == pytest.approx(1 / math.sqrt(120), rel=1e-6)
    u2 = solve_diffusion_1d(const_field(2.0), np.zeros(1), 1.0, 1025)
    np.testing.assert_allclose(u2, u / 2, atol=1e-15)
    assert np.all(solve_diffusion_1d(const_field(3.0), np.zeros(1), 0.0, 33) == 0)


def test_flux_conservation():
    fld = CoefficientField("affine-a1", 4)
    x = np.array([0.3, -0.7, 0.9, -0.2])
    zf = np.linspace(0, 1, 20001)
    u = solve_diffusion_1d(fld, x, 10.0, z=zf)
    h = zf[1] - zf[0]
    zi = np.linspace(0.05, 0.95, 100)
    idx = np.rint(zi / h).astype(int)
    du = (u[idx + 1] - u[idx - 1]) / (2 * h)
    a = fld.evaluate(zf[idx], x)[0]
    flux = a * du + 10.0 * zf[idx]
    assert np.ptp(flux) <= 1e-6 * np.max(np.abs(flux))


def test_monotone_in_coefficient():
    norms = [l2_grid_norm(solve_diffusion_1d(const_field(c), np.zeros(1), 10.0, 129)) for c in (1, 1.5, 2, 4, 8)]
    assert all(a > b for a, b in zip(norms, norms[1:]))


def test_sensitivity_decay():
    orc = OperatorOracle(CoefficientField("affine-a1", 8), K=129)
    x0 = np.zeros(8)
    h = 1e-5
    sens = []
    for j in range(8):
        dx = np.zeros(8)
        dx[j] = h
        sens.append(l2_grid_norm((orc(x0 + dx) - orc(x0 - dx)) / (2 * h)))
    sens = np.array(sens)
    b = holomorphy_sequence(8)
    assert np.all(np.isfinite(sens))
    ratio = sens / b
    center = math.exp(np.mean(np.log(ratio)))
    assert np.all(ratio <= 3 * center) and np.all(ratio >= center / 3)


def test_synthetic_examples():
    y = np.array([1.0, 0.0, 0.0])
    orc = synthetic_affine_family([1.0], [0.0], y)
    assert np.all(orc(np.array([[0.3]])) == 0)
    orc = synthetic_affine_family([1.0], [1.0], y)
    np.testing.assert_allclose(orc(np.array([0.5])), [math.sqrt(3) * 0.5, 0, 0], rtol=1e-15)
    b = np.array([1.0, 0.5, 0.25])
    c = np.array([0.5, -0.5, 0.25])
    orc = synthetic_affine_family(b, c, y, "sup")
    corners = np.array([[s1, s2, s3] for s1 in (-1, 1) for s2 in (-1, 1) for s3 in (-1, 1)], dtype=float)
    assert np.max(orc.output_norm(orc(corners))) == pytest.approx(math.sqrt(3) * np.abs(c).sum(), rel=1e-15)
    with pytest.raises(ConfigError):
        synthetic_affine_family([0.1], [0.2], y)


def test_training_set_examples():
    orc = oracle_from_config(CFG)
    data = generate_training_set(orc, 12, 0.0, seed=5)
    np.testing.assert_array_equal(data.Y, orc(data.X))
    again = generate_training_set(orc, 12, 0.0, seed=5)
    assert np.array_equal(data.X, again.X) and np.array_equal(data.Y, again.Y)
    noisy = generate_training_set(orc, 12, 0.05, seed=5)
    norms = orc.output_norm(noisy.E)
    assert np.all(norms <= 0.05 * (1 + 1e-12))
    assert math.sqrt(np.sum(norms**2)) <= math.sqrt(12) * 0.05


def test_counter_seeding_prefix_stable():
    orc = oracle_from_config(CFG)
    a = generate_training_set(orc, 5, seed=9)
    b = generate_training_set(orc, 9, seed=9)
    np.testing.assert_array_equal(a.X, b.X[:5])


def test_l4_noise_in_ball():
    cfg = dict(CFG, norm="weighted-l4")
    orc = oracle_from_config(cfg)
    data = generate_training_set(orc, 30, 0.1, seed=2)
    assert np.all(orc.output_norm(data.E) <= 0.1 * (1 + 1e-12))


def test_training_set_csv_roundtrip():
    orc = oracle_from_config(CFG)
    data = generate_training_set(orc, 4, seed=1)
    back = TrainingSet.from_csv(data.to_csv())
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.Y, data.Y)


def test_encoder_decoder_errors():
    orc = oracle_from_config(dict(CFG, K=33))
    rule = smolyak(4, 2)
    ed = EncoderDecoder(4, 33, orc.output_norm.weights)
    err = encoder_decoder_error_terms(orc, ed, rule)
    assert err.E_X2 == 0.0 and err.E_Y2 == 0.0
    lossy = EncoderDecoder(4, 33, orc.output_norm.weights, keep=np.arange(16))
    assert encoder_decoder_error_terms(orc, lossy, rule).E_Y2 > 0


def test_config_roundtrip_and_errors():
    text = format_config_text(CFG) + "# comment\n\n"
    cfg = parse_config_text(text)
    orc = oracle_from_config(cfg)
    assert orc.config()["family"] == "affine-a1"
    with pytest.raises(ConfigError):
        parse_config_text("family affine")
    with pytest.raises(ConfigError):
        oracle_from_config({"family": "affine-a1"})
    with pytest.raises(ConfigError):
        oracle_from_config(dict(CFG, family="poisson-2d"))
    with pytest.raises(ConfigError):
        oracle_from_config(dict(CFG, norm="l7"))


def test_oracle_ignores_padding():
    orc = oracle_from_config(CFG)
    X = np.random.default_rng(0).uniform(-1, 1, (3, 9))
    np.testing.assert_array_equal(orc(X), orc(X[:, :4]))


def test_trapezoid_norm_l2():
    K = 513
    z = np.linspace(0, 1, K)
    assert DiscreteNorm.trapezoid(K)(np.sin(np.pi * z)[None])[0] == pytest.approx(math.sqrt(0.5), rel=1e-6)
