"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the package's own computation paths:
dense trapezoid integration for the normal-mixture probabilities, central
finite differences for gradients, direct pmf formulas (via scipy) for the
integer size profiles, and case-by-case construction of the per-person
score vectors for the moment checks.
"""

import numpy as np
import pytest
from scipy.special import expit

from snowlink import enumerate_patterns


def fd_gradient(fun, theta, step=1e-5):
    """Central finite differences of a scalar function of a vector."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for i in range(len(theta)):
        up = theta.copy()
        dn = theta.copy()
        up[i] += step
        dn[i] -= step
        out[i] = (fun(up) - fun(dn)) / (2.0 * step)
    return out


def mixture_prob_trapezoid(alpha, sigma, x, n, within_site=None, npts=100_000):
    """Dense 1-D integration of the logistic-normal pattern probability on
    z in (-10, 10); the tail mass beyond is far below the comparison scale."""
    z = np.linspace(-10.0, 10.0, npts)
    density = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    prod = np.ones_like(z)
    for i in range(n):
        if i == within_site:
            continue
        p = expit(alpha[i] + sigma * z)
        prod = prod * (p if (x >> i) & 1 else 1.0 - p)
    return float(np.trapezoid(prod * density, z))


class FlatZeroPatternModel:
    """One-parameter family whose all-zero pattern mass is constant.

    Between-site probabilities put a fixed mass on the empty pattern and
    spread the rest over nonzero patterns with weights exp(theta * popcount),
    so the empty-pattern gradient vanishes identically.  Within-site
    probabilities are uniform and parameter-free.
    """

    family = "flat_zero"

    def __init__(self, n, zero_mass=0.4):
        self.n = n
        self.q = 1
        self.zero_mass = zero_mass

    def validate_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        assert theta.shape == (1,)
        return theta

    def _between(self, theta):
        t = float(np.asarray(theta).reshape(())) if np.ndim(theta) else float(theta)
        pats = np.array(enumerate_patterns(self.n))
        counts = np.array([bin(int(x)).count("1") for x in pats], dtype=float)
        w = np.exp(t * counts)
        w[0] = 0.0
        w /= w.sum()
        probs = (1.0 - self.zero_mass) * w
        probs[0] = self.zero_mass
        tbar = float((w * counts).sum())
        grads = probs * (counts - tbar)
        grads[0] = 0.0
        return pats, probs, grads

    def probs_and_grads(self, theta, patterns, within_site=None):
        theta = self.validate_theta(np.atleast_1d(theta))
        xs = np.atleast_1d(np.asarray(patterns, dtype=np.int64))
        if within_site is not None:
            probs = np.full(len(xs), 2.0 ** -(self.n - 1))
            return probs, np.zeros((len(xs), 1))
        pats, probs, grads = self._between(theta[0])
        idx = np.searchsorted(pats, xs)
        return probs[idx], grads[idx][:, None]

    def pattern_prob(self, theta, x, within_site=None):
        return float(self.probs_and_grads(theta, [x], within_site)[0][0])

    def pattern_grad(self, theta, x, within_site=None):
        return self.probs_and_grads(theta, [x], within_site)[1][0]

    def zero_prob_and_grad(self, theta):
        self.validate_theta(np.atleast_1d(theta))
        return self.zero_mass, np.zeros(1)


def random_model(rng, n, allow_rasch=True, quadrature_nodes=60):
    """A random model instance with an interior parameter draw."""
    from snowlink import HomogeneousLinkModel, RaschLinkModel

    if allow_rasch and rng.random() < 0.5:
        model = RaschLinkModel(n, quadrature_nodes=quadrature_nodes)
        theta = rng.uniform(-2.0, 2.0, model.q)
        theta[-1] = rng.uniform(0.0, 2.0)
    else:
        model = HomogeneousLinkModel(n)
        theta = rng.uniform(-2.0, 2.0, model.q)
    return model, theta


def random_sample_data(rng, n=None, N=None, max_count=6):
    """A small random SampleData with nonempty between and within maps."""
    from snowlink import SampleData

    n = n or int(rng.integers(2, 5))
    N = N or n + int(rng.integers(1, 6))
    m = tuple(int(v) for v in rng.integers(2, 8, n))
    nonzero = list(range(1, 1 << n))
    picks = rng.choice(nonzero, size=min(3, len(nonzero)), replace=False)
    between1 = {int(x): int(rng.integers(1, max_count)) for x in picks}
    picks2 = rng.choice(nonzero, size=min(2, len(nonzero)), replace=False)
    between2 = {int(x): int(rng.integers(1, max_count)) for x in picks2}
    within = []
    for l in range(n):
        space = [x for x in enumerate_patterns(n, l) if x != 0]
        budget = m[l]
        chosen = {}
        if space and budget > 1:
            x = int(rng.choice(space))
            chosen[x] = int(rng.integers(1, budget))
        within.append(chosen)
    return SampleData(n=n, N=N, m=m, between1=between1,
                      within=tuple(within), between2=between2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
