import numpy as np
import pytest

from snowlink import (
    DimensionMismatch,
    DomainError,
    HomogeneousLinkModel,
    QuadratureRule,
    RaschLinkModel,
    ScopeViolation,
    enumerate_patterns,
    model_from_spec,
)
from snowlink.link_model import DEFAULT_QUADRATURE_NODES

from conftest import fd_gradient, mixture_prob_trapezoid


def test_quadrature_rule_moments():
    for k in (10, 30, DEFAULT_QUADRATURE_NODES):
        rule = QuadratureRule.gauss_hermite(k)
        assert abs(rule.weights.sum() - 1.0) <= 1e-12
        assert abs((rule.weights * rule.nodes).sum()) <= 1e-10
        assert abs((rule.weights * rule.nodes**2).sum() - 1.0) <= 1e-8


def test_homogeneous_fair_coin_pattern():
    model = HomogeneousLinkModel(2)
    theta = np.zeros(2)  # p = (0.5, 0.5)
    assert model.pattern_prob(theta, 0b01) == pytest.approx(0.25, abs=1e-15)


def test_homogeneous_gradient_is_logistic_derivative():
    model = HomogeneousLinkModel(1)
    grad = model.pattern_grad(np.zeros(1), 0b1)
    assert grad[0] == pytest.approx(0.25, abs=1e-15)


def test_zero_pattern_probabilities():
    model = HomogeneousLinkModel(2)
    theta = np.log(np.array([0.3, 0.3]) / 0.7)
    p0, g0 = model.zero_prob_and_grad(theta)
    assert p0 == pytest.approx(0.49, abs=1e-12)
    rasch = RaschLinkModel(2, quadrature_nodes=40)
    p0r, _ = rasch.zero_prob_and_grad(np.array([0.0, 0.0, 0.0]))
    assert p0r == pytest.approx(0.25, abs=1e-12)


def test_mixing_inflates_zero_pattern_mass():
    # spread sigma=2 pushes mass toward extreme patterns, so the all-zero
    # pattern gains over the sigma=0 product value 0.25
    rasch = RaschLinkModel(2)
    p0, _ = rasch.zero_prob_and_grad(np.array([0.0, 0.0, 2.0]))
    oracle = mixture_prob_trapezoid(np.zeros(2), 2.0, 0b00, 2)
    assert p0 == pytest.approx(oracle, abs=1e-8)
    assert p0 > 0.25


def test_rasch_matches_dense_integration():
    rasch = RaschLinkModel(2)
    value = rasch.pattern_prob(np.array([0.0, 0.0, 1.0]), 0b11)
    oracle = mixture_prob_trapezoid(np.zeros(2), 1.0, 0b11, 2)
    assert value == pytest.approx(oracle, abs=1e-8)


def test_rasch_sigma_zero_equals_homogeneous():
    rng = np.random.default_rng(5)
    for n in (1, 3, 8):
        alpha = rng.uniform(-2, 2, n)
        rasch = RaschLinkModel(n, quadrature_nodes=40)
        homog = HomogeneousLinkModel(n)
        pats = enumerate_patterns(n)
        pr, _ = rasch.probs_and_grads(np.concatenate([alpha, [0.0]]), pats)
        ph, _ = homog.probs_and_grads(alpha, pats)
        assert np.max(np.abs(pr - ph)) <= 1e-12


@pytest.mark.parametrize("family", ["homogeneous", "rasch"])
def test_normalization_and_gradient_sum(family, rng):
    for trial in range(10):
        n = int(rng.integers(1, 9))
        if family == "homogeneous":
            model = HomogeneousLinkModel(n)
            theta = rng.uniform(-2, 2, model.q)
        else:
            model = RaschLinkModel(n, quadrature_nodes=40)
            theta = rng.uniform(-2, 2, model.q)
            theta[-1] = rng.uniform(0, 2)
        probs, grads = model.probs_and_grads(theta, enumerate_patterns(n))
        assert abs(probs.sum() - 1.0) <= 1e-10
        assert np.max(np.abs(grads.sum(axis=0))) <= 1e-10
        for l in range(n):
            pw, gw = model.probs_and_grads(theta, enumerate_patterns(n, l),
                                           within_site=l)
            assert abs(pw.sum() - 1.0) <= 1e-10
            assert np.max(np.abs(gw.sum(axis=0))) <= 1e-10


def test_gradients_match_finite_differences(rng):
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(1, 6))
        if rng.random() < 0.5:
            model = HomogeneousLinkModel(n)
            theta = rng.uniform(-2, 2, model.q)
        else:
            model = RaschLinkModel(n, quadrature_nodes=40)
            theta = rng.uniform(-2, 2, model.q)
            theta[-1] = rng.uniform(0.1, 2)
        x = int(rng.integers(0, 1 << n))
        grad = model.pattern_grad(theta, x)
        fd = fd_gradient(lambda th: model.pattern_prob(th, x), theta)
        worst = max(worst, np.max(np.abs(grad - fd) / (1.0 + np.abs(fd))))
    assert worst <= 1e-6


def test_rasch_within_scope_gradient(rng):
    model = RaschLinkModel(3, quadrature_nodes=40)
    theta = np.array([0.3, -0.2, 0.5, 0.7])
    grad = model.pattern_grad(theta, 0b100, within_site=0)
    fd = fd_gradient(lambda th: model.pattern_prob(th, 0b100, within_site=0), theta)
    assert np.max(np.abs(grad - fd)) <= 1e-8
    assert grad[0] == 0.0  # own-site coordinate inert


def test_quadrature_convergence_at_default():
    rng = np.random.default_rng(11)
    for trial in range(10):
        n = int(rng.integers(1, 7))
        theta = rng.uniform(-2, 2, n + 1)
        theta[-1] = rng.uniform(0, 2)
        coarse = RaschLinkModel(n, quadrature_nodes=DEFAULT_QUADRATURE_NODES)
        fine = RaschLinkModel(n, quadrature_nodes=2 * DEFAULT_QUADRATURE_NODES)
        x = int(rng.integers(0, 1 << n))
        assert coarse.pattern_prob(theta, x) == pytest.approx(
            fine.pattern_prob(theta, x), abs=1e-9
        )


def test_scope_violation():
    model = HomogeneousLinkModel(3)
    with pytest.raises(ScopeViolation):
        model.pattern_prob(np.zeros(3), 0b001, within_site=0)


def test_dimension_mismatch_and_negative_spread():
    model = HomogeneousLinkModel(3)
    with pytest.raises(DimensionMismatch):
        model.pattern_prob(np.zeros(2), 0b001)
    rasch = RaschLinkModel(2)
    with pytest.raises(DomainError):
        rasch.validate_theta(np.array([0.0, 0.0, -0.5]))


def test_model_from_spec_round_trip():
    model = model_from_spec({"family": "rasch", "n": 3, "quadrature_nodes": 48})
    assert model.spec() == {"family": "rasch", "n": 3, "quadrature_nodes": 48}
    homog = model_from_spec({"family": "homogeneous", "n": 2})
    assert homog.spec() == {"family": "homogeneous", "n": 2}
