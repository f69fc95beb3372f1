"""Parametric families for link-pattern probabilities.

Two families are provided.  The homogeneous family gives every person the same
per-site link probability, parametrized by one logit per sampled site.  The
random-effect family adds a person-level normal effect on the logit scale
(site effects ``alpha_1..alpha_n`` plus a spread ``sigma >= 0``); its pattern
probabilities are one-dimensional normal-mixture integrals evaluated with a
fixed probabilists' Gauss-Hermite rule shared by every pattern, so the
probabilities over a pattern space always sum to one exactly (up to rounding).

Both families expose the same surface: probability and analytic gradient of a
single pattern, a vectorized variant over many patterns, and an O(n) shortcut
for the all-zero pattern.  Each evaluation comes in a between-site scope (all
``n`` sites participate) and a within-site scope for site ``l`` (site ``l``'s
factor is skipped and its gradient coordinate is zero).

The number of quadrature nodes is configurable.  The default of 100 nodes
keeps the worst-case absolute error of the mixture integrals below 1e-11 for
spreads up to 2; 30 nodes, for comparison, only reaches about 1e-5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import expit, log_expit

from .errors import (
    DimensionMismatch,
    DomainError,
    InvariantViolation,
    ParseError,
    ScopeViolation,
)

DEFAULT_QUADRATURE_NODES = 100


@dataclass(frozen=True)
class QuadratureRule:
    """Probabilists' Gauss-Hermite nodes and weights, normalized so that the
    weights sum to one against the standard normal density."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w, z = self.weights, self.nodes
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvariantViolation("quadrature weights do not sum to 1")
        if abs((w * z).sum()) > 1e-10:
            raise InvariantViolation("quadrature first moment is not 0")
        if abs((w * z * z).sum() - 1.0) > 1e-8:
            raise InvariantViolation("quadrature second moment is not 1")

    @property
    def size(self) -> int:
        return len(self.nodes)

    @classmethod
    def gauss_hermite(cls, k: int) -> "QuadratureRule":
        if k < 1:
            raise DomainError(f"node count must be >= 1, got {k}")
        z, w = hermegauss(k)
        return cls(nodes=z, weights=w / np.sqrt(2.0 * np.pi))


def _pattern_bits(patterns, n: int) -> np.ndarray:
    xs = np.atleast_1d(np.asarray(patterns, dtype=np.int64))
    if xs.size and (xs.min() < 0 or xs.max() >= (1 << n)):
        raise InvariantViolation(f"pattern out of range for n={n}")
    return ((xs[:, None] >> np.arange(n)) & 1).astype(float)


def _check_scope(xs, within_site, n):
    if within_site is None:
        return
    if not 0 <= within_site < n:
        raise ScopeViolation(f"within-site index {within_site} out of range for n={n}")
    xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
    if np.any((xs >> within_site) & 1):
        raise ScopeViolation(
            f"within-site pattern for site {within_site} has its own-site bit set"
        )


class HomogeneousLinkModel:
    """Independent per-site Bernoulli links with person-independent probabilities.

    Parameters are the ``n`` per-site logits; the probability of a pattern is
    the product of the per-site factors it selects.
    """

    family = "homogeneous"

    def __init__(self, n: int):
        if n < 1:
            raise DomainError(f"site count must be >= 1, got {n}")
        self.n = n
        self.q = n

    def validate_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.q,):
            raise DimensionMismatch(
                f"expected parameter vector of length {self.q}, got shape {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise DomainError("parameter vector has non-finite entries")
        return theta

    def probs_and_grads(self, theta, patterns, within_site=None):
        """Probabilities and gradients for an array of patterns.

        Returns ``(probs, grads)`` with shapes ``(P,)`` and ``(P, q)``.
        """
        theta = self.validate_theta(theta)
        _check_scope(patterns, within_site, self.n)
        X = _pattern_bits(patterns, self.n)
        active = np.ones(self.n, dtype=bool)
        if within_site is not None:
            active[within_site] = False
        lp = log_expit(theta[active])
        l1p = log_expit(-theta[active])
        probs = np.exp(X[:, active] @ lp + (1.0 - X[:, active]) @ l1p)
        grads = np.zeros((X.shape[0], self.q))
        grads[:, active] = probs[:, None] * (X[:, active] - expit(theta[active]))
        return probs, grads

    def pattern_prob(self, theta, x: int, within_site=None) -> float:
        probs, _ = self.probs_and_grads(theta, [x], within_site)
        return float(probs[0])

    def pattern_grad(self, theta, x: int, within_site=None) -> np.ndarray:
        _, grads = self.probs_and_grads(theta, [x], within_site)
        return grads[0]

    def zero_prob_and_grad(self, theta):
        """Probability and gradient of the all-zero pattern, computed in O(n)."""
        theta = self.validate_theta(theta)
        p0 = float(np.exp(log_expit(-theta).sum()))
        return p0, -p0 * expit(theta)

    def spec(self) -> dict:
        return {"family": self.family, "n": self.n}


class RaschLinkModel:
    """Site effects plus a normal person effect on the logit scale.

    Parameters are ``(alpha_1, ..., alpha_n, sigma)`` with ``sigma >= 0``; the
    boundary ``sigma = 0`` is admitted and reproduces the homogeneous family
    exactly.  Pattern probabilities mix the conditional product over a shared
    Gauss-Hermite rule, and gradients differentiate under the same node sum.
    """

    family = "rasch"

    def __init__(self, n: int, quadrature_nodes: int = DEFAULT_QUADRATURE_NODES):
        if n < 1:
            raise DomainError(f"site count must be >= 1, got {n}")
        self.n = n
        self.q = n + 1
        self.rule = QuadratureRule.gauss_hermite(quadrature_nodes)

    def validate_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.q,):
            raise DimensionMismatch(
                f"expected parameter vector of length {self.q}, got shape {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise DomainError("parameter vector has non-finite entries")
        if theta[-1] < 0:
            raise DomainError(f"person-effect spread must be >= 0, got {theta[-1]}")
        return theta

    def probs_and_grads(self, theta, patterns, within_site=None):
        theta = self.validate_theta(theta)
        alpha, sigma = theta[:-1], theta[-1]
        _check_scope(patterns, within_site, self.n)
        X = _pattern_bits(patterns, self.n)
        active = np.ones(self.n, dtype=bool)
        if within_site is not None:
            active[within_site] = False
        Xa = X[:, active]
        probs = np.zeros(X.shape[0])
        grads = np.zeros((X.shape[0], self.q))
        galpha = grads[:, :-1]
        for zk, wk in zip(self.rule.nodes, self.rule.weights):
            a = alpha[active] + sigma * zk
            fk = np.exp(Xa @ log_expit(a) + (1.0 - Xa) @ log_expit(-a))
            resid = Xa - expit(a)
            probs += wk * fk
            contrib = (wk * fk)[:, None] * resid
            galpha[:, active] += contrib
            grads[:, -1] += zk * contrib.sum(axis=1)
        return probs, grads

    def pattern_prob(self, theta, x: int, within_site=None) -> float:
        probs, _ = self.probs_and_grads(theta, [x], within_site)
        return float(probs[0])

    def pattern_grad(self, theta, x: int, within_site=None) -> np.ndarray:
        _, grads = self.probs_and_grads(theta, [x], within_site)
        return grads[0]

    def zero_prob_and_grad(self, theta):
        """All-zero pattern probability and gradient without enumerating patterns."""
        theta = self.validate_theta(theta)
        alpha, sigma = theta[:-1], theta[-1]
        p0 = 0.0
        grad = np.zeros(self.q)
        for zk, wk in zip(self.rule.nodes, self.rule.weights):
            a = alpha + sigma * zk
            fk = float(np.exp(log_expit(-a).sum()))
            pk = expit(a)
            p0 += wk * fk
            grad[:-1] += -wk * fk * pk
            grad[-1] += -wk * zk * fk * pk.sum()
        return p0, grad

    def spec(self) -> dict:
        return {"family": self.family, "n": self.n,
                "quadrature_nodes": self.rule.size}


def model_from_spec(spec: dict):
    """Construct a link model from its configuration mapping.

    The mapping carries ``family`` ("homogeneous" or "rasch"), ``n``, and for
    the random-effect family an optional ``quadrature_nodes``.
    """
    try:
        family = spec["family"]
        n = int(spec["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model spec {spec!r}: {exc}") from exc
    if family == "homogeneous":
        return HomogeneousLinkModel(n)
    if family == "rasch":
        nodes = int(spec.get("quadrature_nodes", DEFAULT_QUADRATURE_NODES))
        return RaschLinkModel(n, quadrature_nodes=nodes)
    raise ParseError(f"unknown link-model family {family!r}")
