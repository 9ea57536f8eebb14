"""Maximum-likelihood fit of the crossed/nested random-intercept model.

Fixed effects are profiled out by generalized least squares and the
deviance is minimised over the four log-variances.  Every evaluation works
on the q x q system ``M = I + Λ Z'Z Λ`` (q = number of random-intercept
columns, a few hundred at most), so the cost is independent of N once the
cross-products are formed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy import optimize, stats

from ..errors import DegenerateSeries, GroupUnseen, RankDeficientFixed, SingularFactorization
from .design import COMPONENTS, FACTORS, Design, ModelSpec

LOG_VAR_LOWER = -30.0
LOG_VAR_UPPER = 10.0
Z975 = float(stats.norm.ppf(0.975))
LOG_2PI = math.log(2.0 * math.pi)
REL_TOL = 1e-8
MAX_ITER = 500


@dataclass(frozen=True)
class FixedEffectEstimate:
    name: str
    coef: float
    se: float
    z: float
    p: float
    ci95: tuple

    def to_dict(self):
        return {"name": self.name, "coef": self.coef, "se": self.se, "z": self.z, "p": self.p,
                "ci95": list(self.ci95)}


@dataclass(frozen=True)
class VarianceComponents:
    sigma2: dict  # component -> variance, in COMPONENTS order
    se: dict
    ci: dict
    at_boundary: dict

    @property
    def total(self):
        return float(sum(self.sigma2.values()))

    @property
    def shares(self):
        total = self.total
        return {k: v / total for k, v in self.sigma2.items()}

    @property
    def sigma2_hour(self):
        return self.sigma2["hour"]

    @property
    def sigma2_day(self):
        return self.sigma2["day"]

    @property
    def sigma2_my(self):
        return self.sigma2["month_year"]

    @property
    def sigma2_resid(self):
        return self.sigma2["residual"]

    def as_array(self):
        return np.array([self.sigma2[c] for c in COMPONENTS])


@dataclass
class ModelFit:
    spec: ModelSpec
    beta: list
    components: VarianceComponents
    loglik: float
    n_obs: int
    converged: bool
    lr_chi2_vs_linear: float
    log_variances: np.ndarray
    gradient: np.ndarray
    blups: dict  # factor -> (labels, values)
    iterations: int = 0
    method: str = "profiled"
    dropped: tuple = ()
    group_sizes: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def coef(self):
        return np.array([b.coef for b in self.beta])

    @property
    def names(self):
        return tuple(b.name for b in self.beta)

    def to_dict(self):
        shares = self.components.shares
        cumulative = 0.0
        random = []
        for comp in COMPONENTS:
            cumulative += shares[comp]
            random.append({
                "component": comp,
                "estimate": self.components.sigma2[comp],
                "se": _none_if_nan(self.components.se[comp]),
                "share": shares[comp],
                "cumulative_share": cumulative,
                "ci95": [_none_if_nan(v) for v in self.components.ci[comp]],
                "at_boundary": self.components.at_boundary[comp],
            })
        return {
            "model": self.spec.name,
            "restriction": self.spec.restriction,
            "method": self.method,
            "n_obs": self.n_obs,
            "group_sizes": dict(zip(FACTORS, self.group_sizes)),
            "converged": self.converged,
            "iterations": self.iterations,
            "loglik": self.loglik,
            "lr_chi2": self.lr_chi2_vs_linear,
            "fixed_effects": [b.to_dict() for b in self.beta],
            "random_effects": random,
            "dropped_columns": list(self.dropped),
            "log_variances": [float(v) for v in self.log_variances],
            "gradient": [float(v) for v in self.gradient],
            "blups": {
                f: {"labels": [str(x) for x in labels], "values": [float(v) for v in values]}
                for f, (labels, values) in self.blups.items()
            },
        }

    @classmethod
    def from_dict(cls, data):
        spec = ModelSpec(data["model"], tuple(b["name"] for b in data["fixed_effects"][1:]),
                         data.get("restriction", "none"))
        beta = [FixedEffectEstimate(b["name"], b["coef"], b["se"], b["z"], b["p"], tuple(b["ci95"]))
                for b in data["fixed_effects"]]
        rand = {r["component"]: r for r in data["random_effects"]}
        comps = VarianceComponents(
            {c: rand[c]["estimate"] for c in COMPONENTS},
            {c: _nan_if_none(rand[c]["se"]) for c in COMPONENTS},
            {c: tuple(_nan_if_none(v) for v in rand[c]["ci95"]) for c in COMPONENTS},
            {c: rand[c]["at_boundary"] for c in COMPONENTS},
        )
        blups = {f: (np.array(v["labels"]), np.array(v["values"], dtype=float))
                 for f, v in data["blups"].items()}
        return cls(spec, beta, comps, data["loglik"], data["n_obs"], data["converged"], data["lr_chi2"],
                   np.array(data["log_variances"]), np.array(data["gradient"]), blups,
                   data.get("iterations", 0), data.get("method", "profiled"),
                   tuple(data.get("dropped_columns", ())),
                   tuple(data.get("group_sizes", {}).get(f, 0) for f in FACTORS))


def _none_if_nan(x):
    return None if x is None or not np.isfinite(x) else float(x)


def _nan_if_none(x):
    return math.nan if x is None else float(x)


@dataclass
class _State:
    deviance: float
    beta: np.ndarray
    cov_beta: np.ndarray
    grad: np.ndarray | None = None
    blup: np.ndarray | None = None


def check_rank(X):
    if X.shape[1] > X.shape[0] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientFixed(f"fixed-effects matrix ({X.shape[0]}x{X.shape[1]}) is not full column rank")


class ProfiledDeviance:
    """-2 log-likelihood of the model as a function of the four log-variances."""

    def __init__(self, design: Design):
        check_rank(design.X)
        Z = design.Z()
        X, y = design.X, design.y
        self.n, self.p = X.shape
        self.S = (Z.T @ Z).toarray()
        self.q = self.S.shape[0]
        self.ZtX = np.asarray(Z.T @ X)
        self.Zty = np.asarray(Z.T @ y).ravel()
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)
        self.factor = np.repeat(np.arange(len(FACTORS)), design.group_sizes)
        self.sizes = design.group_sizes

    def evaluate(self, phi, gradient=False) -> _State:
        var = np.exp(phi)
        s2e = var[3]
        lam = np.sqrt(var[self.factor] / s2e)
        M = self.S * np.outer(lam, lam)
        M[np.diag_indices_from(M)] += 1.0
        try:
            cM = la.cho_factor(M, lower=True, check_finite=False)
        except la.LinAlgError:
            raise SingularFactorization("random-effects system is not positive definite") from None
        ZtX_l = lam[:, None] * self.ZtX
        Zty_l = lam * self.Zty
        sol = la.cho_solve(cM, np.column_stack([ZtX_l, Zty_l]), check_finite=False)
        A = self.XtX - ZtX_l.T @ sol[:, : self.p]
        b = self.Xty - ZtX_l.T @ sol[:, self.p]
        try:
            cA = la.cho_factor(A, lower=True, check_finite=False)
        except la.LinAlgError:
            raise RankDeficientFixed("GLS normal equations are singular") from None
        beta = la.cho_solve(cA, b, check_finite=False)
        rvr = (self.yty - Zty_l @ sol[:, self.p] - beta @ b) / s2e
        logdet = self.n * math.log(s2e) + 2.0 * np.log(np.diag(cM[0])).sum()
        dev = self.n * LOG_2PI + logdet + rvr
        cov_beta = s2e * la.cho_solve(cA, np.eye(self.p), check_finite=False)
        state = _State(float(dev), beta, cov_beta)
        if not gradient:
            return state

        Ztr = self.Zty - self.ZtX @ beta
        t = la.cho_solve(cM, lam * Ztr, check_finite=False)
        lt = lam * t
        S_lt = self.S @ lt
        s = (Ztr - S_lt) / s2e  # Z' V^-1 r
        rr = self.yty - 2.0 * beta @ self.Xty + beta @ self.XtX @ beta
        vr2 = (rr - 2.0 * (lam * Ztr) @ t + lt @ S_lt) / s2e ** 2  # |V^-1 r|^2
        Linv = la.solve_triangular(cM[0], np.eye(self.q), lower=True, check_finite=False)
        minv_diag = np.einsum("ij,ij->j", Linv, Linv)
        grad = np.empty(4)
        for f in range(len(FACTORS)):
            sel = self.factor == f
            grad[f] = np.sum(1.0 - minv_diag[sel]) - var[f] * (s[sel] @ s[sel])
        grad[3] = self.n - self.q + minv_diag.sum() - s2e * vr2
        state.grad = grad
        state.blup = var[self.factor] * s
        return state

    def __call__(self, phi):
        st = self.evaluate(phi, gradient=True)
        return st.deviance, st.grad


def fd_hessian(grad_fn, phi, step=1e-4, index=None):
    """Central-difference Hessian of an analytic gradient, symmetrised."""
    phi = np.asarray(phi, dtype=float)
    index = np.arange(len(phi)) if index is None else np.asarray(index)
    H = np.zeros((len(index), len(index)))
    for a, i in enumerate(index):
        e = np.zeros_like(phi)
        e[i] = step
        H[:, a] = (grad_fn(phi + e)[index] - grad_fn(phi - e)[index]) / (2 * step)
    return 0.5 * (H + H.T)


def fd_gradient(dev_fn, phi, step=1e-5):
    phi = np.asarray(phi, dtype=float)
    g = np.zeros_like(phi)
    for i in range(len(phi)):
        e = np.zeros_like(phi)
        e[i] = step
        g[i] = (dev_fn(phi + e) - dev_fn(phi - e)) / (2 * step)
    return g


def minimize_deviance(fun, grad_fn, phi0, maxiter=MAX_ITER, scale=1.0):
    """Bounded quasi-Newton search followed by a projected Newton polish.

    ``fun`` returns (deviance, gradient).  Returns (phi, iterations, converged).
    """
    bounds = [(LOG_VAR_LOWER, LOG_VAR_UPPER)] * len(phi0)
    d0, _ = fun(phi0)
    unit = max(abs(d0), 1.0)

    def scaled(phi):
        # numerically hopeless corners of the box get a steep wall back towards the start
        try:
            d, g = fun(phi)
        except (SingularFactorization, RankDeficientFixed):
            away = phi - phi0
            return 1e6, 1e6 * away / max(np.linalg.norm(away), 1e-12)
        if not np.isfinite(d):
            away = phi - phi0
            return 1e6, 1e6 * away / max(np.linalg.norm(away), 1e-12)
        return d / unit, g / unit

    res = optimize.minimize(scaled, phi0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-12, "maxcor": 20})
    phi = np.clip(res.x, LOG_VAR_LOWER, LOG_VAR_UPPER)
    iters = int(res.nit)
    dev, g = fun(phi)

    # components far below the data scale with outward gradient sit on the floor
    tiny = math.log(scale) - 20.0
    for i in range(len(phi)):
        if LOG_VAR_LOWER < phi[i] < tiny and g[i] >= 0:
            trial = phi.copy()
            trial[i] = LOG_VAR_LOWER
            d_trial, g_trial = fun(trial)
            if d_trial <= dev + 1e-12 * abs(dev):
                phi, dev, g = trial, d_trial, g_trial

    # deviance values carry rounding noise of this size; ties within it are
    # decided by the gradient norm
    noise = 1e-12 * max(abs(dev), 1.0)
    rel_change = math.inf if not res.success else 0.0
    for _ in range(50):
        at_lower = phi <= LOG_VAR_LOWER + 1e-12
        at_upper = phi >= LOG_VAR_UPPER - 1e-12
        free = ~((at_lower & (g > 0)) | (at_upper & (g < 0)))
        if not free.any() or np.max(np.abs(g[free])) < 1e-10:
            rel_change = 0.0
            break
        idx = np.flatnonzero(free)
        H = fd_hessian(grad_fn, phi, index=idx)
        try:
            la.cho_factor(H)
            step = -la.solve(H, g[idx], assume_a="sym")
        except (la.LinAlgError, ValueError):
            step = -g[idx] / max(np.max(np.abs(np.diag(H))), 1.0)
        alpha = 1.0
        accepted = False
        for _halving in range(12):
            trial = phi.copy()
            trial[idx] = np.clip(phi[idx] + alpha * step, LOG_VAR_LOWER, LOG_VAR_UPPER)
            d_trial, g_trial = fun(trial)
            if d_trial < dev - noise or (
                    d_trial <= dev + noise
                    and np.max(np.abs(g_trial[idx])) < np.max(np.abs(g[idx]))):
                accepted = True
                break
            alpha *= 0.5
        iters += 1
        if not accepted:
            break
        rel_change = abs(dev - d_trial) / max(abs(d_trial), 1e-300)
        phi, dev, g = trial, d_trial, g_trial

    at_lower = phi <= LOG_VAR_LOWER + 1e-12
    at_upper = phi >= LOG_VAR_UPPER - 1e-12
    kkt = np.where(at_lower, np.minimum(g, 0.0), np.where(at_upper, np.maximum(g, 0.0), g))
    converged = rel_change < REL_TOL and np.max(np.abs(kkt)) < 1e-6 and iters <= maxiter
    return phi, iters, bool(converged)


def ols_loglik(X, y):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta
    rss = float(r @ r)
    n = len(y)
    if rss <= 0:
        return math.inf
    return -0.5 * n * (LOG_2PI + math.log(rss / n) + 1.0)


def _lr(loglik, X, y):
    lr = 2.0 * (loglik - ols_loglik(X, y))
    if lr < 0:
        if lr < -1e-6:
            warnings.warn(f"negative LR statistic {lr:.3g} clamped to 0", stacklevel=3)
        lr = 0.0
    return float(lr)


def assemble_fit(design: Design, phi, beta, cov_beta, loglik, grad, blup, hessian_fn,
                 iterations, converged, method) -> ModelFit:
    """Build a ModelFit from an optimum; shared by the profiled and dense routes."""
    phi = np.asarray(phi, dtype=float)
    var = np.exp(phi)
    se_beta = np.sqrt(np.clip(np.diag(cov_beta), 0.0, None))
    fixed = []
    for name, b, s in zip(design.names, beta, se_beta):
        z = b / s if s > 0 else math.nan
        p = float(2.0 * stats.norm.sf(abs(z))) if np.isfinite(z) else math.nan
        fixed.append(FixedEffectEstimate(name, float(b), float(s), float(z), p,
                                         (float(b - Z975 * s), float(b + Z975 * s))))

    boundary = phi <= LOG_VAR_LOWER + 1e-6
    se_phi = np.full(4, math.nan)
    interior = np.flatnonzero(~boundary)
    if len(interior):
        H = hessian_fn(phi, interior)
        try:
            cov_phi = la.inv(H / 2.0)
            d = np.diag(cov_phi)
            se_phi[interior] = np.where(d > 0, np.sqrt(np.abs(d)), math.nan)
        except la.LinAlgError:
            pass
    sigma2, se, ci, atb = {}, {}, {}, {}
    for i, comp in enumerate(COMPONENTS):
        sigma2[comp] = float(var[i])
        atb[comp] = bool(boundary[i])
        se[comp] = float(var[i] * se_phi[i])
        if np.isfinite(se_phi[i]):
            ci[comp] = (float(math.exp(phi[i] - Z975 * se_phi[i])), float(math.exp(phi[i] + Z975 * se_phi[i])))
        else:
            ci[comp] = (math.nan, math.nan)
    comps = VarianceComponents(sigma2, se, ci, atb)

    offsets = design.offsets()
    blups = {f: (design.labels[f], np.asarray(blup[offsets[f]], dtype=float)) for f in FACTORS}
    lr = _lr(loglik, design.X, design.y)
    return ModelFit(design.spec, fixed, comps, float(loglik), design.n, converged, lr, phi,
                    np.asarray(grad, dtype=float), blups, iterations, method, design.dropped,
                    design.group_sizes)


def fit_ml(design: Design, maxiter: int = MAX_ITER) -> ModelFit:
    """Maximum-likelihood fit via the profiled deviance."""
    total = float(np.var(design.y))
    if total <= 0:
        raise DegenerateSeries("response has zero variance")
    dev = ProfiledDeviance(design)
    phi0 = np.full(4, np.clip(math.log(total / 4.0), LOG_VAR_LOWER, LOG_VAR_UPPER))

    def grad_fn(phi):
        return dev.evaluate(phi, gradient=True).grad

    phi, iters, converged = minimize_deviance(dev, grad_fn, phi0, maxiter=maxiter, scale=total)
    state = dev.evaluate(phi, gradient=True)
    if not converged:
        warnings.warn(f"model {design.spec.name!r} did not converge after {iters} iterations",
                      stacklevel=2)
    return assemble_fit(design, phi, state.beta, state.cov_beta, -0.5 * state.deviance, state.grad,
                        state.blup, lambda p, idx: fd_hessian(grad_fn, p, index=idx), iters,
                        converged, "profiled")


def profiled_deviance(design: Design):
    """Callable deviance(phi) for external checks (finite-difference gradient etc.)."""
    dev = ProfiledDeviance(design)
    return lambda phi: dev.evaluate(np.asarray(phi, dtype=float)).deviance


def lr_test_vs_linear(fit: ModelFit, design: Design) -> float:
    """2 (loglik_mixed - loglik_OLS) with the same fixed effects."""
    return _lr(fit.loglik, design.X, design.y)


def fixed_part(fit: ModelFit, design: Design):
    if tuple(design.names) != fit.names:
        raise ValueError("design columns do not match the fitted fixed effects")
    return design.X @ fit.coef


def predict_conditional(fit: ModelFit, design: Design):
    """Fixed part plus the BLUPs of the row's hour, day and month-year intercepts."""
    yhat = fixed_part(fit, design).copy()
    for f in FACTORS:
        labels, values = fit.blups[f]
        lookup = {str(k): v for k, v in zip(labels, values)}
        try:
            group_values = np.array([lookup[str(k)] for k in design.labels[f]])
        except KeyError as exc:
            raise GroupUnseen(f"{f} group {exc.args[0]} was not present when the model was fitted") from None
        yhat += group_values[design.codes[f]]
    return yhat
