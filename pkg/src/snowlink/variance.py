"""Asymptotic variances: analytic precision matrices, scalar variances for the
size estimates, an empirical per-person-vector covariance estimator, and Wald
intervals.

Three precision matrices are available, each computed by enumerating the
relevant pattern spaces:

* ``sigma1`` - joint (size, parameter) precision for the frame-covered part
  under unconditional fitting, dimension ``q + 1`` with index 0 the size
  coordinate;
* ``psi1`` - parameter-only precision for the frame-covered part under
  conditional fitting, dimension ``q``, built from zero-truncated pattern
  probabilities;
* ``sigma2`` - joint precision for the frame-uncovered part, dimension
  ``q + 1`` (the same for both fitting routes).

Scalar variances refer to the normalized errors ``(tau_hat - tau)/sqrt(tau)``;
the variance of the point estimate itself is ``tau_hat * sigma_sq``, which is
what the Wald intervals use.  The combined variance for the total is the
population-share-weighted mixture of the component variances.

Singular or ill-conditioned matrices are an error: the limit theory assumes
non-singularity, so a violation must surface rather than be pseudo-inverted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import ndtri

from .errors import (
    DegenerateDenominator,
    DimensionMismatch,
    DomainError,
    InsufficientData,
    NonFiniteLikelihood,
    SingularMatrix,
)
from .estimators import EstimateReport
from .patterns import SampleData, enumerate_patterns

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class AsymptoticMatrices:
    """A precision matrix, its inverse (the asymptotic covariance), and the
    condition number of the precision form.

    ``covariance_form`` is ``None`` when the precision estimate is singular
    and the caller asked to keep it anyway (the sparse empirical estimator on
    degenerate data); using such a matrix where an inverse is required raises
    :class:`~snowlink.errors.SingularMatrix` at that point instead.
    """

    which: str
    inverse_form: np.ndarray
    covariance_form: np.ndarray | None
    condition_number: float


def _guarded_inverse(M: np.ndarray, label: str):
    M = 0.5 * (M + M.T)
    eigs = np.linalg.eigvalsh(M)
    if eigs[0] <= 0.0:
        raise SingularMatrix(f"{label} is not positive definite (min eig {eigs[0]:.3e})")
    cond = float(eigs[-1] / eigs[0])
    if cond > CONDITION_LIMIT:
        raise SingularMatrix(
            f"{label} condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}; "
            "refusing to invert"
        )
    try:
        inv = cho_solve(cho_factor(M), np.eye(len(M)))
    except np.linalg.LinAlgError:  # pragma: no cover - eig check passed
        w, V = np.linalg.eigh(M)
        inv = (V / w) @ V.T
    return 0.5 * (inv + inv.T), cond


def _finish(which: str, M: np.ndarray, require_inverse: bool = True) -> AsymptoticMatrices:
    label = f"the {which} precision matrix"
    if require_inverse:
        cov, cond = _guarded_inverse(M, label)
    else:
        try:
            cov, cond = _guarded_inverse(M, label)
        except SingularMatrix:
            cov, cond = None, float("inf")
    return AsymptoticMatrices(which=which, inverse_form=0.5 * (M + M.T),
                              covariance_form=cov, condition_number=cond)


def _positive(probs, what):
    if np.any(probs <= 0.0) or np.any(~np.isfinite(probs)):
        raise NonFiniteLikelihood(f"{what} vanished during enumeration")


def _check_design(model, n: int, N: int):
    if model.n != n:
        raise DimensionMismatch(f"model has {model.n} sites but the design says {n}")
    if not 1 <= n <= N:
        raise DomainError(f"need 1 <= n <= N, got n={n}, N={N}")


def _within_information(theta, model, N: int) -> np.ndarray:
    """Sum over sites of the within-site information blocks, weighted 1/N."""
    blk = np.zeros((model.q, model.q))
    for l in range(model.n):
        pats = enumerate_patterns(model.n, excluded_site=l)
        probs, grads = model.probs_and_grads(theta, pats, within_site=l)
        _positive(probs, f"a within-site pattern probability (site {l})")
        blk += (grads.T / probs) @ grads / N
    return blk


def _sigma1_precision(theta1, model1, n: int, N: int) -> np.ndarray:
    _check_design(model1, n, N)
    f = 1.0 - n / N
    pi0, g0 = model1.zero_prob_and_grad(theta1)
    if f * pi0 <= 1e-12:
        raise DegenerateDenominator(
            "the size-size entry divides by (1 - n/N) * pi0; it vanishes for a "
            f"full-frame design or a zero-mass empty pattern (got {f * pi0:.3e})"
        )
    pats = enumerate_patterns(n)
    probs, grads = model1.probs_and_grads(theta1, pats)
    _positive(probs, "a pattern probability")
    q = model1.q
    M = np.empty((q + 1, q + 1))
    M[0, 0] = (1.0 - f * pi0) / (f * pi0)
    M[0, 1:] = M[1:, 0] = -g0 / pi0
    M[1:, 1:] = f * (grads.T / probs) @ grads + _within_information(theta1, model1, N)
    return M


def sigma1_inverse(theta1, model1, n: int, N: int) -> AsymptoticMatrices:
    """Joint (size, parameter) precision for the frame-covered part under
    unconditional fitting, by enumeration of both pattern spaces."""
    return _finish("sigma1", _sigma1_precision(theta1, model1, n, N))


def _psi1_precision(theta1, model1, n: int, N: int) -> np.ndarray:
    _check_design(model1, n, N)
    f = 1.0 - n / N
    pi0, g0 = model1.zero_prob_and_grad(theta1)
    escape = 1.0 - pi0
    _positive(np.array([escape]), "the escape probability")
    pats = [x for x in enumerate_patterns(n) if x != 0]
    probs, grads = model1.probs_and_grads(theta1, pats)
    _positive(probs, "a pattern probability")
    tprobs = probs / escape
    tgrads = grads / escape + np.outer(probs, g0) / escape**2
    M = f * escape * (tgrads.T / tprobs) @ tgrads
    M += _within_information(theta1, model1, N)
    return M


def psi1_inverse(theta1, model1, n: int, N: int) -> AsymptoticMatrices:
    """Parameter precision for the frame-covered part under conditional
    fitting: zero-truncated outside-pattern information plus within blocks."""
    return _finish("psi1", _psi1_precision(theta1, model1, n, N))


def _sigma2_precision(theta2, model2) -> np.ndarray:
    pi0, g0 = model2.zero_prob_and_grad(theta2)
    _positive(np.array([pi0, 1.0 - pi0]), "the zero-pattern or escape probability")
    pats = enumerate_patterns(model2.n)
    probs, grads = model2.probs_and_grads(theta2, pats)
    _positive(probs, "a pattern probability")
    q = model2.q
    M = np.empty((q + 1, q + 1))
    M[0, 0] = (1.0 - pi0) / pi0
    M[0, 1:] = M[1:, 0] = -g0 / pi0
    M[1:, 1:] = (grads.T / probs) @ grads
    return M


def sigma2_inverse(theta2, model2) -> AsymptoticMatrices:
    """Joint (size, parameter) precision for the frame-uncovered part.

    The matrix is singular by construction when the parameter count reaches
    the number of free observed cells (for instance the random-effect family
    with fewer than three sites), and the constructor then refuses to invert.
    """
    return _finish("sigma2", _sigma2_precision(theta2, model2))


# ---------------------------------------------------------------------------
# Scalar variances of the normalized size errors


def sigma1_sq_umle(theta1, model1, n: int, N: int,
                   sigma1_inv: np.ndarray | None = None) -> float:
    """Variance of the normalized size error under unconditional fitting.

    ``sigma1_inv`` may supply a (possibly empirically estimated) joint
    precision matrix; by default the analytic one is computed.
    """
    if sigma1_inv is None:
        sigma1_inv = sigma1_inverse(theta1, model1, n, N).inverse_form
    f = 1.0 - n / N
    pi0, g0 = model1.zero_prob_and_grad(theta1)
    denom = 1.0 - f * pi0
    sub = sigma1_inv[1:, 1:] - (f / (pi0 * denom)) * np.outer(g0, g0)
    block_cov, _ = _guarded_inverse(sub, "the parameter block of the joint covariance")
    fac = f / denom
    return float(fac * (pi0 + fac * (g0 @ block_cov @ g0)))


def sigma1_sq_cmle(theta1, model1, n: int, N: int,
                   psi1_inv: np.ndarray | None = None) -> float:
    """Variance of the normalized size error under conditional fitting."""
    if psi1_inv is None:
        psi1_inv = psi1_inverse(theta1, model1, n, N).inverse_form
    cov, _ = _guarded_inverse(psi1_inv, "the conditional parameter precision")
    f = 1.0 - n / N
    pi0, g0 = model1.zero_prob_and_grad(theta1)
    fac = f / (1.0 - f * pi0)
    return float(fac * (pi0 + fac * (g0 @ cov @ g0)))


def sigma2_sq(theta2, model2, sigma2_inv: np.ndarray | None = None) -> float:
    """Variance of the normalized size error for the frame-uncovered part
    (shared by both fitting routes)."""
    if sigma2_inv is None:
        sigma2_inv = sigma2_inverse(theta2, model2).inverse_form
    pi0, g0 = model2.zero_prob_and_grad(theta2)
    escape = 1.0 - pi0
    sub = sigma2_inv[1:, 1:] - np.outer(g0, g0) / (pi0 * escape)
    block_cov, _ = _guarded_inverse(sub, "the parameter block of the outside covariance")
    h = 1.0 / escape
    return float(h * (pi0 + h * (g0 @ block_cov @ g0)))


def scalar_variances(theta1, model1, theta2, model2, n: int, N: int,
                     method: str) -> tuple[float, float]:
    """Method-matched scalar variances (covered part, uncovered part)."""
    if method == "umle":
        s1 = sigma1_sq_umle(theta1, model1, n, N)
    elif method == "cmle":
        s1 = sigma1_sq_cmle(theta1, model1, n, N)
    else:
        raise DomainError(f"unknown method {method!r}")
    return s1, sigma2_sq(theta2, model2)


def theta_covariances(report: EstimateReport, data: SampleData, model1, model2):
    """Asymptotic covariance matrices of the link-parameter estimators,
    matched to the report's method (for the covered part) and shared for the
    uncovered part.  These are covariances of ``sqrt(tau) * error``."""
    n, N = data.n, data.N
    if report.method == "umle":
        si = sigma1_inverse(report.theta1, model1, n, N).inverse_form
        f = 1.0 - n / N
        pi0, g0 = model1.zero_prob_and_grad(report.theta1)
        sub = si[1:, 1:] - (f / (pi0 * (1.0 - f * pi0))) * np.outer(g0, g0)
        cov1, _ = _guarded_inverse(sub, "the parameter block of the joint covariance")
    else:
        cov1 = psi1_inverse(report.theta1, model1, n, N).covariance_form
    cov2 = sigma2_inverse(report.theta2, model2).covariance_form[1:, 1:]
    return cov1, cov2


# ---------------------------------------------------------------------------
# Empirical per-person-vector covariance (sparse, pattern-weighted)


def empirical_v_covariance(data: SampleData, theta_hat, tau_hat: int, model,
                           which: str) -> AsymptoticMatrices:
    """Estimate a precision matrix as the sample covariance of per-person
    score-like vectors, evaluated at the fitted parameters.

    Observed people contribute the vector of their recorded pattern; the
    ``tau_hat - (observed)`` unobserved people all share the zero-pattern
    vector.  The computation weights each distinct pattern by its count, so
    no per-person arrays are materialized; the covariance divisor is
    ``tau_hat - 1``.
    """
    if which not in ("sigma1", "psi1", "sigma2"):
        raise DomainError(f"unknown matrix kind {which!r}")
    tau_hat = int(tau_hat)
    q = model.q
    pi0, g0 = model.zero_prob_and_grad(theta_hat)
    _positive(np.array([pi0, 1.0 - pi0]), "the zero-pattern or escape probability")
    rows: list[np.ndarray] = []
    weights: list[float] = []

    def add(vec, w):
        if w > 0:
            rows.append(vec)
            weights.append(float(w))

    if which == "sigma2":
        unobserved = tau_hat - data.r2
        if unobserved < 0:
            raise DomainError(f"tau_hat={tau_hat} below the observed count {data.r2}")
        if data.between2:
            pats = list(data.between2)
            probs, grads = model.probs_and_grads(theta_hat, pats)
            _positive(probs, "an observed pattern probability")
            for k, x in enumerate(pats):
                add(np.concatenate([[1.0], grads[k] / probs[k]]), data.between2[x])
        add(np.concatenate([[-(1.0 - pi0) / pi0], g0 / pi0]), unobserved)
        dim = q + 1
    else:
        f = 1.0 - data.n / data.N
        unobserved = tau_hat - data.m_total - data.r1
        if unobserved < 0:
            raise DomainError(
                f"tau_hat={tau_hat} below the observed count {data.m_total + data.r1}"
            )
        if which == "sigma1" and f * pi0 <= 1e-12:
            raise DegenerateDenominator(
                "the zero-pattern vector divides by (1 - n/N) * pi0"
            )
        escape = 1.0 - pi0
        if data.between1:
            pats = list(data.between1)
            probs, grads = model.probs_and_grads(theta_hat, pats)
            _positive(probs, "an observed pattern probability")
            for k, x in enumerate(pats):
                if which == "sigma1":
                    vec = np.concatenate([[1.0], grads[k] / probs[k]])
                else:
                    tp = probs[k] / escape
                    tg = grads[k] / escape + probs[k] * g0 / escape**2
                    vec = tg / tp
                add(vec, data.between1[x])
        for l in range(data.n):
            pats = list(data.within[l]) + [0]
            counts = [data.within[l][x] for x in data.within[l]]
            counts.append(data.m[l] - sum(counts))
            probs, grads = model.probs_and_grads(theta_hat, pats, within_site=l)
            _positive(probs, f"a within-site pattern probability (site {l})")
            for k in range(len(pats)):
                vec = grads[k] / probs[k]
                if which == "sigma1":
                    vec = np.concatenate([[1.0], vec])
                add(vec, counts[k])
        if which == "sigma1":
            add(np.concatenate([[-(1.0 - f * pi0) / (f * pi0)], g0 / pi0]), unobserved)
            dim = q + 1
        else:
            add(np.zeros(q), unobserved)
            dim = q
    total = sum(weights)
    if total != tau_hat:
        raise DomainError(
            f"person accounting failed: {total} weighted vectors for tau_hat={tau_hat}"
        )
    if total < q + 2:
        raise InsufficientData(
            f"{total} effective observations are too few for a {dim}-dimensional "
            "covariance"
        )
    V = np.vstack(rows)
    w = np.asarray(weights)
    mean = (w @ V) / total
    centered = V - mean
    M = (centered.T * w) @ centered / (total - 1.0)
    # degenerate data can make the sample covariance singular (for instance
    # when everyone is observed the size coordinate is constant); keep the
    # matrix and let any downstream inversion raise instead
    return _finish(which, M, require_inverse=False)


# ---------------------------------------------------------------------------
# Variance report and Wald intervals


@dataclass
class VarianceReport:
    """Scalar variances, point-estimate variances, and Wald intervals."""

    method: str
    source: str
    sigma1_sq: float
    sigma2_sq: float
    sigma_sq: float
    var_tau1: float
    var_tau2: float
    var_tau: float
    level: float
    intervals: dict

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "source": self.source,
            "sigma1_sq": self.sigma1_sq,
            "sigma2_sq": self.sigma2_sq,
            "sigma_sq": self.sigma_sq,
            "var_tau1": self.var_tau1,
            "var_tau2": self.var_tau2,
            "var_tau": self.var_tau,
            "level": self.level,
            "intervals": {k: list(v) for k, v in self.intervals.items()},
        }


def _interval(center: float, variance: float, level: float):
    if variance < 0:
        raise DomainError(f"negative variance {variance}")
    half = ndtri(0.5 * (1.0 + level)) * float(np.sqrt(variance))
    return (center - half, center + half)


def _interval_set(tau1: int, tau2: int, s1: float, s2: float, level: float):
    tau = tau1 + tau2
    if tau > 0:
        a1, a2 = tau1 / tau, tau2 / tau
        combined = a1 * s1 + a2 * s2
    else:
        combined = 0.0
    intervals = {
        "tau1": _interval(tau1, tau1 * s1, level),
        "tau2": _interval(tau2, tau2 * s2, level),
        "tau": _interval(tau, tau * combined, level),
    }
    return combined, intervals


def wald_intervals(report: EstimateReport, level: float = 0.95) -> dict:
    """Wald intervals for the three sizes, from a variance-enriched report."""
    if report.variance is None:
        raise DomainError("the report carries no variance estimates yet")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must be in (0, 1), got {level}")
    v = report.variance
    _, intervals = _interval_set(report.tau1, report.tau2,
                                 v.sigma1_sq, v.sigma2_sq, level)
    return intervals


def attach_variance(report: EstimateReport, data: SampleData, model1, model2,
                    level: float = 0.95, source: str = "analytic") -> EstimateReport:
    """Compute method-matched variances and intervals and attach them to the
    report.  ``source`` picks the analytic matrices or the empirical
    per-person-vector estimate of the same matrices."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must be in (0, 1), got {level}")
    n, N = data.n, data.N
    if source == "analytic":
        s1, s2 = scalar_variances(report.theta1, model1, report.theta2, model2,
                                  n, N, report.method)
    elif source == "empirical_v":
        if report.method == "umle":
            m1 = empirical_v_covariance(data, report.theta1, report.tau1,
                                        model1, "sigma1")
            s1 = sigma1_sq_umle(report.theta1, model1, n, N,
                                sigma1_inv=m1.inverse_form)
        else:
            m1 = empirical_v_covariance(data, report.theta1, report.tau1,
                                        model1, "psi1")
            s1 = sigma1_sq_cmle(report.theta1, model1, n, N,
                                psi1_inv=m1.inverse_form)
        m2 = empirical_v_covariance(data, report.theta2, report.tau2,
                                    model2, "sigma2")
        s2 = sigma2_sq(report.theta2, model2, sigma2_inv=m2.inverse_form)
    else:
        raise DomainError(f"unknown variance source {source!r}")
    combined, intervals = _interval_set(report.tau1, report.tau2, s1, s2, level)
    report.variance = VarianceReport(
        method=report.method, source=source,
        sigma1_sq=float(s1), sigma2_sq=float(s2), sigma_sq=float(combined),
        var_tau1=float(report.tau1 * s1), var_tau2=float(report.tau2 * s2),
        var_tau=float(report.tau1 * s1 + report.tau2 * s2),
        level=level, intervals=intervals,
    )
    return report
