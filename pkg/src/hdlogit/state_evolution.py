"""Fixed-point system for the bias and variance constants.

Given the aspect ratio kappa and a signal strength (either the true
gamma^2 or the corrupted eta^2), three coupled nonlinear equations pin the
bias inflation alpha, the coordinate noise scale sigma_star, and the
inverse-curvature scale lambda. The expectations in the equations run over
a correlated bivariate Gaussian (Q1, Q2) and involve the proximal operator
of the antiderivative of the sigmoid; they are evaluated with tensor
Gauss-Hermite quadrature, and the outer system is solved by a damped
Newton iteration on the logs of the three unknowns.

In the gamma parameterization the pair (Q1, Q2) has covariance

    [ gamma^2            -alpha gamma^2            ]
    [ -alpha gamma^2      alpha^2 gamma^2 + kappa sigma_star^2 ].

The eta parameterization substitutes gamma^2 = (eta^2 - kappa sigma_star^2)
/ alpha^2, which leaves the system square with the same three unknowns.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

DEFAULT_ORDER = 60
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200
PROX_TOL = 1e-12
FRONTIER_MARGIN = 0.02
_STEP_CLAMP = 2.0  # max Newton step per iteration, in log units
_LOG_BOUND = 30.0


class OutsideExistenceRegionError(RuntimeError):
    """(kappa, gamma) lies at or beyond the separability frontier."""


class NoConvergenceError(RuntimeError):
    """The root finder failed to drive the residuals below tolerance."""


class InconsistentEtaError(RuntimeError):
    """No solution with positive implied gamma^2 exists for the given eta^2."""


@dataclass(frozen=True)
class BivariateGaussianSpec:
    """Centered bivariate normal described by variances and covariance."""

    var1: float
    var2: float
    cov: float

    def __post_init__(self):
        if self.var1 < 0 or self.var2 < 0:
            raise ValueError("variances must be nonnegative")
        if self.cov * self.cov > self.var1 * self.var2 * (1.0 + 1e-12) + 1e-300:
            raise ValueError("covariance matrix is not positive semidefinite")


@dataclass(frozen=True)
class CorrectionParams:
    """Solved constants linking the MLE to the truth at aspect ratio kappa.

    The identity eta_sq = alpha^2 * gamma_sq + kappa * sigma_star^2 holds by
    construction for either solve mode.
    """

    alpha: float
    sigma_star: float
    lam: float
    kappa: float
    gamma_sq: float
    eta_sq: float
    residual_norm: float
    iterations: int

    def __post_init__(self):
        ident = self.alpha ** 2 * self.gamma_sq + self.kappa * self.sigma_star ** 2
        if abs(ident - self.eta_sq) > 1e-8 * max(1.0, self.eta_sq):
            raise ValueError("eta^2 identity violated")


@functools.lru_cache(maxsize=16)
def _gauss_hermite(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights rescaled for expectations under a standard normal."""
    x, w = np.polynomial.hermite.hermgauss(order)
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


def prox_logistic(lam: float, s):
    """Proximal map of the sigmoid antiderivative: the root t of t + lam*g(t) = s.

    Accepts scalars or arrays. The root lies in (s - lam, s); a Newton
    iteration safeguarded by bisection brackets drives the stationarity
    residual below 1e-12.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    scalar = np.isscalar(s)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if lam == 0.0:
        t = s.copy()
        return float(t[0]) if scalar else t
    lo, hi = s - lam, s.copy()
    t = s - lam * expit(s)  # Newton step from t = s
    for _ in range(200):
        gt = expit(t)
        f = t + lam * gt - s
        lo = np.where(f < 0.0, t, lo)
        hi = np.where(f > 0.0, t, hi)
        if np.max(np.abs(f)) <= PROX_TOL:
            break
        t_new = t - f / (1.0 + lam * gt * (1.0 - gt))
        outside = (t_new <= lo) | (t_new >= hi)
        t = np.where(outside, 0.5 * (lo + hi), t_new)
    return float(t[0]) if scalar else t


def expect_bivariate(f, spec: BivariateGaussianSpec, order: int = DEFAULT_ORDER) -> float:
    """E[f(Q1, Q2)] for (Q1, Q2) ~ N(0, spec) by tensor Gauss-Hermite quadrature.

    ``f`` must accept two equal-length arrays and return an array. A rank-one
    covariance degenerates to a single 1-D rule along the support direction.
    """
    if order < 2:
        raise ValueError("order must be >= 2")
    v1, v2, c = spec.var1, spec.var2, spec.cov
    z, w = _gauss_hermite(order)
    tiny = 1e-14 * max(v1, v2, 1e-300)
    if v1 <= tiny and v2 <= tiny:
        return float(np.asarray(f(np.zeros(1), np.zeros(1)))[0])
    det = v1 * v2 - c * c
    if det <= tiny * max(v1, v2):
        if v1 <= tiny:
            a1, a2 = 0.0, np.sqrt(v2)
        else:
            a1, a2 = np.sqrt(v1), c / np.sqrt(v1)
        return float(np.sum(w * f(a1 * z, a2 * z)))
    l11 = np.sqrt(v1)
    l21 = c / l11
    l22 = np.sqrt(v2 - l21 * l21)
    Z1 = np.repeat(z, order)
    Z2 = np.tile(z, order)
    W = np.repeat(w, order) * np.tile(w, order)
    return float(np.sum(W * f(l11 * Z1, l21 * Z1 + l22 * Z2)))


class _QuadratureSystem:
    """Residuals of the three equations on a fixed tensor quadrature grid."""

    def __init__(self, kappa: float, order: int):
        self.kappa = kappa
        z, w = _gauss_hermite(order)
        self.Z1 = np.repeat(z, order)
        self.Z2 = np.tile(z, order)
        self.W = np.repeat(w, order) * np.tile(w, order)

    def residuals(self, sd1: float, alpha: float, sigma: float, lam: float) -> np.ndarray:
        """sd1 is the standard deviation of Q1 (= gamma in the gamma mode)."""
        k = self.kappa
        Q1 = sd1 * self.Z1
        # Cholesky form of the (Q1, Q2) covariance: the conditional sd of Q2
        # given Q1 is sqrt(kappa) * sigma in both parameterizations.
        Q2 = -alpha * sd1 * self.Z1 + np.sqrt(k) * sigma * self.Z2
        t = prox_logistic(lam, Q2)
        lam_g = Q2 - t  # stationarity: lam * g(prox(s)) = s - prox(s)
        g1 = expit(Q1)
        et = expit(t)
        g_prime = et * (1.0 - et)
        r1 = np.sum(self.W * 2.0 * g1 * lam_g * lam_g) - k * k * sigma * sigma
        r2 = np.sum(self.W * g1 * Q1 * lam_g)
        r3 = np.sum(self.W * 2.0 * g1 / (1.0 + lam * g_prime)) - (1.0 - k)
        return np.array([r1, r2, r3])


def _classical_limit_init(kappa: float, gamma: float, order: int) -> np.ndarray:
    """Small-kappa expansion of the system: lam ~ kappa / E[2 g g'] etc."""
    z, w = _gauss_hermite(order)
    q = gamma * z
    g = expit(q)
    c1 = float(np.sum(w * 2.0 * g * g * (1.0 - g)))      # E[2 g(q) g'(q)]
    c2 = float(np.sum(w * 2.0 * g * expit(-q) ** 2))      # E[2 g(q) g(-q)^2]
    return np.array([1.0 + kappa, np.sqrt(c2) / c1, max(kappa / c1, 1e-8)])


def _spec_init(kappa: float, gamma: float) -> np.ndarray:
    return np.array([
        1.0 + kappa,
        np.sqrt(kappa / (1.0 - kappa) * (1.0 + gamma * gamma)),
        1.0 / (1.0 - kappa),
    ])


def _damped_newton(F, x0: np.ndarray, tol: float, max_iter: int):
    """Damped Newton in log space with a forward-difference Jacobian.

    Falls back to a Broyden rank-one update of the last good Jacobian when
    the fresh one is singular or ill-conditioned. Returns (x, iterations,
    residual_inf_norm, converged).
    """
    x = x0.copy()
    f = F(x)
    J = None
    h = 1e-6
    for it in range(max_iter):
        res = float(np.max(np.abs(f)))
        if res <= tol:
            return x, it, res, True
        J_new = np.empty((3, 3))
        for j in range(3):
            xp = x.copy()
            xp[j] += h
            J_new[:, j] = (F(xp) - f) / h
        if np.isfinite(J_new).all() and np.linalg.cond(J_new) < 1e13:
            J = J_new
        elif J is None:
            return x, it, res, False
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -f, rcond=None)[0]
        m = float(np.max(np.abs(step)))
        if m > _STEP_CLAMP:
            step *= _STEP_CLAMP / m
        norm0 = float(np.linalg.norm(f))
        scale, accepted = 1.0, False
        for _ in range(40):
            x_try = x + scale * step
            f_try = F(x_try)
            if np.isfinite(f_try).all() and np.linalg.norm(f_try) < norm0:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            return x, it, res, False
        # Broyden update keeps a usable Jacobian if the next FD one degenerates
        dx = scale * step
        df = f_try - f
        J = J + np.outer(df - J @ dx, dx) / float(dx @ dx)
        x, f = x_try, f_try
    return x, max_iter, float(np.max(np.abs(f))), False


def _check_existence(kappa: float, gamma: float, frontier, margin: float) -> None:
    if frontier is None:
        from .probe_frontier import default_frontier_table
        frontier = default_frontier_table()
    kappa_star = frontier.kappa_star(gamma)
    if kappa >= (1.0 - margin) * kappa_star:
        raise OutsideExistenceRegionError(
            f"kappa={kappa:.4g} is not safely below the separability frontier "
            f"kappa_star({gamma:.4g}) = {kappa_star:.4g}")


def solve_gamma(kappa: float, gamma: float, *, order: int = DEFAULT_ORDER,
                tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                frontier=None, check_existence: bool = True,
                cache=None) -> CorrectionParams:
    """Solve the three-equation system for (alpha, sigma_star, lambda) at (kappa, gamma)."""
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    if check_existence:
        _check_existence(kappa, gamma, frontier, FRONTIER_MARGIN)
    if cache is not None:
        hit = cache.lookup("gamma", kappa, gamma, order)
        if hit is not None:
            return hit
    system = _QuadratureSystem(kappa, order)

    def F(x):
        alpha, sigma, lam = np.exp(np.clip(x, -_LOG_BOUND, _LOG_BOUND))
        return system.residuals(gamma, alpha, sigma, lam)

    last = None
    for init in (_spec_init(kappa, gamma), _classical_limit_init(kappa, gamma, order)):
        x, it, res, ok = _damped_newton(F, np.log(init), tol, max_iter)
        last = (it, res)
        if ok:
            alpha, sigma, lam = np.exp(x)
            if alpha < 1.0 - 1e-6:
                raise NoConvergenceError(
                    f"solved alpha={alpha:.6g} < 1; outside the trusted region")
            params = CorrectionParams(
                alpha=float(alpha), sigma_star=float(sigma), lam=float(lam),
                kappa=kappa, gamma_sq=gamma * gamma,
                eta_sq=float(alpha * alpha * gamma * gamma + kappa * sigma * sigma),
                residual_norm=res, iterations=it)
            if cache is not None:
                cache.store("gamma", kappa, gamma, order, params)
            return params
    raise NoConvergenceError(
        f"no convergence at kappa={kappa}, gamma={gamma}: "
        f"best residual {last[1]:.3e} after {last[0]} iterations")


def solve_eta(kappa: float, eta: float, *, order: int = DEFAULT_ORDER,
              tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
              frontier=None, check_existence: bool = True,
              cache=None) -> CorrectionParams:
    """Solve the system given the corrupted signal strength eta^2 instead of gamma^2.

    The implied gamma^2 = (eta^2 - kappa sigma_star^2) / alpha^2 must come
    out positive; a solve that lands on the degenerate gamma^2 = 0 branch is
    reported as :class:`InconsistentEtaError`.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if cache is not None:
        hit = cache.lookup("eta", kappa, eta, order)
        if hit is not None:
            return hit
    eta_sq = eta * eta
    system = _QuadratureSystem(kappa, order)
    gamma_floor = 1e-8 * eta_sq
    evals = {"total": 0, "blocked": 0}

    def F(x):
        alpha, sigma, lam = np.exp(np.clip(x, -_LOG_BOUND, _LOG_BOUND))
        gamma_sq = (eta_sq - kappa * sigma * sigma) / (alpha * alpha)
        evals["total"] += 1
        if gamma_sq <= 0.0:
            # infeasible region: steer the line search away smoothly
            evals["blocked"] += 1
            return np.full(3, 1e6 * (1.0 - gamma_sq / eta_sq))
        return system.residuals(np.sqrt(gamma_sq), alpha, sigma, lam)

    # seed gamma from the identity applied to the gamma-mode initialization
    g2_seed = (eta_sq - kappa ** 2 / (1.0 - kappa)) / \
        ((1.0 + kappa) ** 2 + kappa ** 2 / (1.0 - kappa))
    g_seed = np.sqrt(max(g2_seed, 1e-4))
    degenerate_seen = False
    last = None
    for init in (_spec_init(kappa, g_seed), _classical_limit_init(kappa, g_seed, order)):
        x, it, res, ok = _damped_newton(F, np.log(init), tol, max_iter)
        last = (it, res)
        if not ok:
            continue
        alpha, sigma, lam = np.exp(x)
        gamma_sq = (eta_sq - kappa * sigma * sigma) / (alpha * alpha)
        if gamma_sq <= gamma_floor:
            degenerate_seen = True
            continue
        if alpha < 1.0 - 1e-6:
            raise NoConvergenceError(
                f"solved alpha={alpha:.6g} < 1; outside the trusted region")
        if check_existence:
            _check_existence(kappa, np.sqrt(gamma_sq), frontier, FRONTIER_MARGIN)
        params = CorrectionParams(
            alpha=float(alpha), sigma_star=float(sigma), lam=float(lam),
            kappa=kappa, gamma_sq=float(gamma_sq), eta_sq=eta_sq,
            residual_norm=res, iterations=it)
        if cache is not None:
            cache.store("eta", kappa, eta, order, params)
        return params
    if degenerate_seen or evals["blocked"] > evals["total"] // 2:
        raise InconsistentEtaError(
            f"eta^2={eta_sq:.6g} admits no solution with positive gamma^2 at kappa={kappa}")
    raise NoConvergenceError(
        f"no convergence at kappa={kappa}, eta={eta}: "
        f"best residual {last[1]:.3e} after {last[0]} iterations")


class SolutionCache:
    """Opt-in on-disk memo of solved triples, stored as a small versioned CSV.

    Purely an optimization: a hit returns the stored parameters, which agree
    with a fresh solve to solver tolerance. Keys are the rounded inputs.
    """

    VERSION = "1"
    _FIELDS = ("mode", "kappa", "value", "order", "alpha", "sigma_star", "lam",
               "gamma_sq", "eta_sq", "residual_norm", "iterations")

    def __init__(self, path):
        self.path = path
        self._entries = {}
        self._load()

    @staticmethod
    def _key(mode, kappa, value, order):
        return (mode, round(float(kappa), 10), round(float(value), 10), int(order))

    def _load(self):
        import csv as _csv
        import os
        if not os.path.exists(self.path):
            return
        with open(self.path, "r", encoding="utf-8", newline="") as fh:
            first = fh.readline()
            if not first.startswith(f"# hdlogit solution cache v{self.VERSION}"):
                return
            for row in _csv.DictReader(fh):
                key = self._key(row["mode"], row["kappa"], row["value"], row["order"])
                self._entries[key] = CorrectionParams(
                    alpha=float(row["alpha"]), sigma_star=float(row["sigma_star"]),
                    lam=float(row["lam"]), kappa=float(row["kappa"]),
                    gamma_sq=float(row["gamma_sq"]), eta_sq=float(row["eta_sq"]),
                    residual_norm=float(row["residual_norm"]),
                    iterations=int(row["iterations"]))

    def lookup(self, mode, kappa, value, order):
        return self._entries.get(self._key(mode, kappa, value, order))

    def store(self, mode, kappa, value, order, params: CorrectionParams):
        import csv as _csv
        import os
        key = self._key(mode, kappa, value, order)
        if key in self._entries:
            return
        self._entries[key] = params
        new = not os.path.exists(self.path)
        with open(self.path, "a", encoding="utf-8", newline="") as fh:
            if new:
                fh.write(f"# hdlogit solution cache v{self.VERSION}\n")
                fh.write(",".join(self._FIELDS) + "\n")
            w = _csv.writer(fh)
            w.writerow([mode, repr(float(kappa)), repr(float(value)), order,
                        repr(params.alpha), repr(params.sigma_star), repr(params.lam),
                        repr(params.gamma_sq), repr(params.eta_sq),
                        repr(params.residual_norm), params.iterations])
