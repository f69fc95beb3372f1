"""Unconditional and conditional maximum-likelihood estimators.

The conditional route maximizes the size-free likelihood in the link
parameters first and then recovers the size estimate from a closed-form ratio
threshold.  The unconditional route alternates the floored ratio threshold (a
size step, exact along the size direction) with a parameter ascent on the
joint likelihood at that size, stopping at the simultaneous fixed point; the
pair is never maximized jointly in one solve.

Likelihood evaluations treat the size as continuous through log-gamma, and
the reported estimate keeps both the continuous ratio value and its floor.
The inner ascent is a damped Newton method on the analytic gradient with a
finite-difference Hessian, backtracking line search, and Levenberg-style
damping that degrades gracefully to (scaled) gradient ascent when the
Hessian is not usable; parameter lower bounds (the person-effect spread) are
handled by projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logit

from .errors import (
    DegenerateDenominator,
    DomainError,
    NoConvergence,
    OscillationDetected,
    SnowlinkError,
    Unidentifiable,
)
from .likelihood import loglik_2, loglik_cond_1, loglik_full_1
from .patterns import SampleData


@dataclass
class FitOptions:
    """Solver tolerances and initialization controls."""

    score_tol: float = 1e-8
    max_iter: int = 200
    max_sweeps: int = 500
    init_theta1: Optional[np.ndarray] = None
    init_theta2: Optional[np.ndarray] = None
    n_starts: int = 1


@dataclass
class ComponentFit:
    """Result of fitting one subpopulation: parameters, size, diagnostics."""

    theta: np.ndarray
    tau_real: float
    tau: int
    iterations: int
    sweeps: int
    grad_norm: float
    converged: bool


@dataclass
class EstimateReport:
    """Point estimates for both subpopulations and their total.

    ``tau1``/``tau2``/``tau`` are the floored (integer) estimates; the
    un-floored values are kept alongside.  ``variance`` is filled in by the
    variance module when requested.
    """

    method: str
    tau1_real: float
    tau1: int
    tau2_real: float
    tau2: int
    theta1: np.ndarray
    theta2: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    variance: Optional[object] = None

    @property
    def tau(self) -> int:
        return self.tau1 + self.tau2

    @property
    def tau_real(self) -> float:
        return self.tau1_real + self.tau2_real

    def to_dict(self) -> dict:
        out = {
            "schema_version": 1,
            "method": self.method,
            "tau1": {"real": self.tau1_real, "floor": self.tau1},
            "tau2": {"real": self.tau2_real, "floor": self.tau2},
            "tau": self.tau,
            "theta1": [float(v) for v in self.theta1],
            "theta2": [float(v) for v in self.theta2],
            "diagnostics": self.diagnostics,
        }
        if self.variance is not None:
            out["variance"] = self.variance.to_dict()
        return out


def _floor_guarded(x: float) -> int:
    """Floor with a one-ulp-scale guard: the ratio threshold is a ratio of
    small integers, so exactly-integer values are common with small counts
    and must floor to themselves (the likelihood ties there and the floor
    convention picks the upper size) rather than ride on rounding luck."""
    return math.floor(x * (1.0 + 4.0 * np.finfo(float).eps))


def tau1_closed_form(m: int, r1: int, n: int, N: int, pi0: float):
    """Ratio-method size estimate for the frame-covered part.

    Returns the continuous value ``(m + r1) / [1 - (1 - n/N) pi0]`` and its
    floor.  The floor never falls below ``m + r1`` because the denominator
    lies in (0, 1].
    """
    if not 0.0 <= pi0 <= 1.0:
        raise DomainError(f"zero-pattern probability {pi0} outside [0, 1]")
    denom = 1.0 - (1.0 - n / N) * pi0
    if denom <= 1e-12:
        raise DegenerateDenominator(
            f"1 - (1 - n/N) * pi0 = {denom:.3e}: size estimate unbounded"
        )
    real = (m + r1) / denom
    floor = _floor_guarded(real)
    assert floor >= m + r1
    return real, floor


# ---------------------------------------------------------------------------
# Inner solver


def _projected(theta, lower):
    return theta if lower is None else np.maximum(theta, lower)


def _projected_grad(grad, theta, lower):
    if lower is None:
        return grad
    pg = grad.copy()
    at_bound = theta <= lower
    pg[at_bound] = np.maximum(pg[at_bound], 0.0)
    return pg


def _fd_hessian(fg, theta, grad0, lower):
    """Central-difference Jacobian of the gradient, symmetrized; falls back to
    a forward difference for coordinates pinned near a lower bound."""
    q = len(theta)
    H = np.empty((q, q))
    for i in range(q):
        h = 1e-6 * max(1.0, abs(theta[i]))
        lo = theta[i] - h
        if lower is not None and lo < lower[i]:
            up = theta.copy()
            up[i] += h
            H[:, i] = (fg(up)[1] - grad0) / h
        else:
            up = theta.copy()
            dn = theta.copy()
            up[i] += h
            dn[i] -= h
            H[:, i] = (fg(up)[1] - fg(dn)[1]) / (2.0 * h)
    return 0.5 * (H + H.T)


@dataclass
class _OptResult:
    theta: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool


def _maximize(fg, theta0, lower=None, score_tol=1e-8, max_iter=200) -> _OptResult:
    """Damped Newton ascent with backtracking; convergence is a projected
    gradient infinity-norm below ``score_tol``."""
    theta = _projected(np.asarray(theta0, dtype=float).copy(), lower)
    value, grad = fg(theta)
    it = 0
    for it in range(1, max_iter + 1):
        pg = _projected_grad(grad, theta, lower)
        if np.max(np.abs(pg)) <= score_tol:
            return _OptResult(theta, value, grad, it - 1, True)
        H = _fd_hessian(fg, theta, grad, lower)
        A = -H
        scale = max(1.0, float(np.trace(A)) / len(theta))
        mu = 0.0
        moved = False
        while mu < 1e12 * scale:
            try:
                direction = np.linalg.solve(
                    A + mu * np.eye(len(theta)), grad
                )
                if not np.all(np.isfinite(direction)) or direction @ grad <= 0:
                    raise np.linalg.LinAlgError
            except np.linalg.LinAlgError:
                mu = max(mu * 10.0, 1e-6 * scale)
                continue
            step = 1.0
            slope = float(direction @ grad)
            # below this expected gain the objective cannot resolve an
            # improvement in floating point; fall back to score decrease
            value_noise = 1e-12 * (1.0 + abs(value))
            while step > 1e-14:
                cand = _projected(theta + step * direction, lower)
                try:
                    v_new, g_new = fg(cand)
                except SnowlinkError:
                    step *= 0.5
                    continue
                sufficient = v_new >= value + 1e-4 * step * slope
                tail = (step * slope <= value_noise
                        and v_new >= value - value_noise
                        and np.max(np.abs(g_new)) < np.max(np.abs(grad)))
                if np.isfinite(v_new) and (sufficient or tail):
                    theta, value, grad = cand, v_new, g_new
                    moved = True
                    break
                step *= 0.5
            if moved:
                break
            mu = max(mu * 10.0, 1e-6 * scale)
        if not moved:
            break
    pg = _projected_grad(grad, theta, lower)
    return _OptResult(theta, value, grad, it, bool(np.max(np.abs(pg)) <= score_tol))


# ---------------------------------------------------------------------------
# Initialization


def _safe_logit(p):
    return logit(np.clip(p, 1e-4, 1.0 - 1e-4))


def _link_fractions(links, at_risk):
    out = np.full(len(links), 0.5)
    pos = at_risk > 0
    out[pos] = links[pos] / at_risk[pos]
    return out


def empirical_initial_theta(data: SampleData, model, which: int) -> np.ndarray:
    """Per-site empirical link logits (observed links over observed people at
    risk), extended by a spread of 0.5 for the random-effect family."""
    n = data.n
    links = np.zeros(n)
    at_risk = np.zeros(n)
    if which == 1:
        r1 = data.r1
        for i in range(n):
            links[i] += sum(c for x, c in data.between1.items() if (x >> i) & 1)
            at_risk[i] += r1
            for l in range(n):
                if l == i:
                    continue
                links[i] += sum(c for x, c in data.within[l].items() if (x >> i) & 1)
                at_risk[i] += data.m[l]
    else:
        r2 = data.r2
        for i in range(n):
            links[i] += sum(c for x, c in data.between2.items() if (x >> i) & 1)
            at_risk[i] += r2
    site_logits = _safe_logit(_link_fractions(links, at_risk))
    if getattr(model, "family", None) == "rasch":
        return np.concatenate([site_logits, [0.5]])
    return site_logits


def _lower_bounds(model):
    if getattr(model, "family", None) == "rasch":
        lb = np.full(model.q, -np.inf)
        lb[-1] = 0.0
        return lb
    return None


def _solve(fg, theta0, model, options: FitOptions) -> _OptResult:
    lower = _lower_bounds(model)
    best = _maximize(fg, theta0, lower, options.score_tol, options.max_iter)
    for k in range(1, options.n_starts):
        # deterministic extra starts around the initializer
        rng = np.random.default_rng(k)
        alt = _maximize(fg, theta0 + rng.normal(0.0, 0.5, size=len(theta0)),
                        lower, options.score_tol, options.max_iter)
        if alt.converged and (not best.converged or alt.value > best.value):
            best = alt
    return best


# ---------------------------------------------------------------------------
# Fits


def fit_cmle_1(data: SampleData, model1, options: FitOptions | None = None) -> ComponentFit:
    """Conditional fit for the frame-covered part: parameters from the
    size-free likelihood, then the size from the closed form."""
    options = options or FitOptions()
    theta0 = (np.asarray(options.init_theta1, dtype=float)
              if options.init_theta1 is not None
              else empirical_initial_theta(data, model1, which=1))

    def fg(th):
        terms = loglik_cond_1(data, th, model1)
        return terms.value, terms.grad_theta

    res = _solve(fg, theta0, model1, options)
    if not res.converged:
        raise NoConvergence(
            f"conditional parameter solve stalled after {res.iterations} iterations "
            f"(score {np.max(np.abs(res.grad)):.2e})"
        )
    pi0, _ = model1.zero_prob_and_grad(res.theta)
    tau_real, tau_floor = tau1_closed_form(data.m_total, data.r1, data.n, data.N, pi0)
    return ComponentFit(theta=res.theta, tau_real=tau_real, tau=tau_floor,
                        iterations=res.iterations, sweeps=0,
                        grad_norm=float(np.max(np.abs(res.grad))), converged=True)


def _integer_size_ascent(fg_at, closed_real, theta0, size_min, lower,
                         options: FitOptions, label: str):
    """Block ascent on (integer size, parameters).

    ``fg_at(size)`` yields the joint log-likelihood (value, gradient) in the
    parameters at a fixed size; ``closed_real(theta)`` is the continuous
    ratio-method size.  The floored ratio value is the exact integer
    maximizer of the joint likelihood in the size direction, so alternating
    it with a parameter ascent increases the likelihood monotonically.  At a
    fixed point the two adjacent sizes are probed as well: a coordinatewise
    optimum need not be the joint one, and a strictly better neighbour
    restarts the ascent.  Returns (theta, size, continuous size, iterations,
    sweeps, score norm).
    """
    theta = np.asarray(theta0, dtype=float)
    tau_int = max(_floor_guarded(closed_real(theta)), size_min)
    total_iter = 0
    best = -np.inf
    for sweep in range(1, options.max_sweeps + 1):
        res = _maximize(fg_at(tau_int), theta, lower,
                        options.score_tol, options.max_iter)
        total_iter += res.iterations
        if not res.converged:
            raise NoConvergence(f"{label}: parameter step stalled in sweep {sweep}")
        if res.value < best - 1e-9:
            raise OscillationDetected(
                f"{label}: alternation stopped increasing the joint likelihood "
                f"in sweep {sweep}"
            )
        theta, best = res.theta, res.value
        tau_real = closed_real(theta)
        tau_next = max(_floor_guarded(tau_real), size_min)
        if tau_next != tau_int:
            tau_int = tau_next
            continue
        moved = False
        for cand in (tau_int - 1, tau_int + 1):
            if cand < size_min:
                continue
            alt = _maximize(fg_at(cand), theta, lower,
                            options.score_tol, options.max_iter)
            total_iter += alt.iterations
            if alt.converged and alt.value > best + 1e-9:
                theta, best, tau_int = alt.theta, alt.value, cand
                moved = True
                break
        if moved:
            continue
        score_norm = float(np.max(np.abs(
            _projected_grad(res.grad, theta, lower))))
        return theta, tau_int, closed_real(theta), total_iter, sweep, score_norm
    raise NoConvergence(f"{label}: unconverged after {options.max_sweeps} sweeps")


def fit_umle_1(data: SampleData, model1, options: FitOptions | None = None) -> ComponentFit:
    """Unconditional fit: block ascent over the integer size (via the floored
    ratio threshold) and the parameters (Newton ascent on the joint
    likelihood at that size), with adjacent-size probing at fixed points.
    The result solves the simultaneous score/threshold system and attains
    the scanned joint maximum on well-behaved instances."""
    options = options or FitOptions()
    if options.init_theta1 is not None:
        theta0 = np.asarray(options.init_theta1, dtype=float)
    else:
        theta0 = fit_cmle_1(data, model1, options).theta
    m, r1 = data.m_total, data.r1

    def fg_at(tau_int):
        def fg(th):
            terms = loglik_full_1(data, float(tau_int), th, model1)
            return terms.value, terms.grad_theta
        return fg

    def closed_real(th):
        pi0, _ = model1.zero_prob_and_grad(th)
        return tau1_closed_form(m, r1, data.n, data.N, pi0)[0]

    theta, tau_int, tau_real, iters, sweeps, score_norm = _integer_size_ascent(
        fg_at, closed_real, theta0, m + r1, _lower_bounds(model1), options,
        "frame-covered size/parameter alternation",
    )
    return ComponentFit(theta=theta, tau_real=tau_real, tau=tau_int,
                        iterations=iters, sweeps=sweeps,
                        grad_norm=score_norm, converged=True)


def fit_2(data: SampleData, model2, method: str,
          options: FitOptions | None = None) -> ComponentFit:
    """Fit the frame-uncovered part with the requested method."""
    options = options or FitOptions()
    if data.r2 == 0:
        raise Unidentifiable("no people observed outside the frame (r2 = 0)")
    theta0 = (np.asarray(options.init_theta2, dtype=float)
              if options.init_theta2 is not None
              else empirical_initial_theta(data, model2, which=2))
    lower = _lower_bounds(model2)

    def fg_cond(th):
        terms = loglik_2(data, 0.0, th, model2, conditional=True)
        return terms.value, terms.grad_theta

    res = _solve(fg_cond, theta0, model2, options)
    if not res.converged:
        raise NoConvergence("conditional parameter solve for the outside part stalled")
    theta = res.theta
    total_iter = res.iterations
    r2 = data.r2

    def tau2_of(th):
        pi0, _ = model2.zero_prob_and_grad(th)
        denom = 1.0 - pi0
        if denom <= 1e-12:
            raise DegenerateDenominator(
                f"1 - pi0 = {denom:.3e} for the outside part: size estimate unbounded"
            )
        return r2 / denom

    if method == "cmle":
        tau_real = tau2_of(theta)
        return ComponentFit(theta=theta, tau_real=tau_real, tau=_floor_guarded(tau_real),
                            iterations=total_iter, sweeps=0,
                            grad_norm=float(np.max(np.abs(res.grad))), converged=True)
    if method != "umle":
        raise DomainError(f"unknown method {method!r}; expected 'umle' or 'cmle'")

    def fg_at(tau_int):
        def fg(th):
            terms = loglik_2(data, float(tau_int), th, model2)
            return terms.value, terms.grad_theta
        return fg

    theta, tau_int, tau_real, iters, sweeps, score_norm = _integer_size_ascent(
        fg_at, tau2_of, theta, r2, lower, options,
        "outside-frame size/parameter alternation",
    )
    return ComponentFit(theta=theta, tau_real=tau_real, tau=tau_int,
                        iterations=total_iter + iters, sweeps=sweeps,
                        grad_norm=score_norm, converged=True)


def fit_total(data: SampleData, model1, model2, method: str,
              options: FitOptions | None = None) -> EstimateReport:
    """Fit both subpopulations with one method and add the floored sizes.

    The same method is used for both parts; component failures are re-raised
    with the failing component named.
    """
    if method not in ("umle", "cmle"):
        raise DomainError(f"unknown method {method!r}; expected 'umle' or 'cmle'")
    options = options or FitOptions()
    try:
        fit1 = (fit_umle_1 if method == "umle" else fit_cmle_1)(data, model1, options)
    except SnowlinkError as exc:
        raise type(exc)(f"frame-covered component: {exc}") from exc
    try:
        fit2 = fit_2(data, model2, method, options)
    except SnowlinkError as exc:
        raise type(exc)(f"outside-frame component: {exc}") from exc
    diagnostics = {
        "covered": {
            "iterations": fit1.iterations, "sweeps": fit1.sweeps,
            "grad_norm": fit1.grad_norm, "converged": fit1.converged,
        },
        "uncovered": {
            "iterations": fit2.iterations, "sweeps": fit2.sweeps,
            "grad_norm": fit2.grad_norm, "converged": fit2.converged,
        },
    }
    return EstimateReport(
        method=method,
        tau1_real=fit1.tau_real, tau1=fit1.tau,
        tau2_real=fit2.tau_real, tau2=fit2.tau,
        theta1=fit1.theta, theta2=fit2.theta,
        diagnostics=diagnostics,
    )
