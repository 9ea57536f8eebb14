"""Dense-covariance reference fit for small designs.

Builds ``V = sum_f s2_f Z_f Z_f' + s2_e I`` explicitly and maximises the
exact marginal likelihood.  Shares nothing numerical with the profiled
route beyond the output assembly, so agreement between the two is a real
check.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg as la
from scipy import optimize

from ..errors import DegenerateSeries, TooLargeForOracle
from .design import FACTORS, Design
from .fit import LOG_2PI, LOG_VAR_LOWER, LOG_VAR_UPPER, assemble_fit, check_rank, fd_hessian

MAX_ORACLE_N = 500


class DenseLikelihood:
    def __init__(self, design: Design):
        if design.n > MAX_ORACLE_N:
            raise TooLargeForOracle(f"dense oracle handles N <= {MAX_ORACLE_N}, got {design.n}")
        check_rank(design.X)
        self.X, self.y = design.X, design.y
        self.n = design.n
        self.Zf = []
        for f in FACTORS:
            Z = np.zeros((self.n, len(design.labels[f])))
            Z[np.arange(self.n), design.codes[f]] = 1.0
            self.Zf.append(Z)
        self.ZZt = [Z @ Z.T for Z in self.Zf]

    def _pieces(self, phi):
        var = np.exp(phi)
        V = var[3] * np.eye(self.n)
        for v, K in zip(var[:3], self.ZZt):
            V += v * K
        Vinv = la.inv(V)
        Vinv = 0.5 * (Vinv + Vinv.T)
        XtVi = self.X.T @ Vinv
        info = XtVi @ self.X
        beta = la.solve(info, XtVi @ self.y, assume_a="sym")
        r = self.y - self.X @ beta
        sign, logdet = np.linalg.slogdet(V)
        dev = self.n * LOG_2PI + logdet + r @ Vinv @ r
        return var, Vinv, info, beta, r, float(dev)

    def deviance(self, phi):
        return self._pieces(np.asarray(phi, dtype=float))[-1]

    def gradient(self, phi):
        var, Vinv, _, _, r, _ = self._pieces(np.asarray(phi, dtype=float))
        u = Vinv @ r
        g = np.empty(4)
        for i, K in enumerate(self.ZZt):
            g[i] = var[i] * (np.sum(Vinv * K) - u @ K @ u)
        g[3] = var[3] * (np.trace(Vinv) - u @ u)
        return g


def oracle_fit_dense(design: Design):
    """Reference ML fit with an explicit N x N covariance (N <= 500)."""
    lik = DenseLikelihood(design)
    total = float(np.var(design.y))
    if total <= 0:
        raise DegenerateSeries("response has zero variance")
    phi0 = np.full(4, np.clip(math.log(total / 4.0), LOG_VAR_LOWER, LOG_VAR_UPPER))
    bounds = [(LOG_VAR_LOWER, LOG_VAR_UPPER)] * 4
    nit = 0
    phi = phi0
    for _ in range(3):
        res = optimize.minimize(lambda p: (lik.deviance(p), lik.gradient(p)), phi, jac=True,
                                method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": 2000, "ftol": 1e-16, "gtol": 1e-12, "maxcor": 30})
        nit += int(res.nit)
        moved = np.max(np.abs(res.x - phi))
        phi = res.x
        if moved < 1e-10:
            break
    # a second, derivative-free opinion on the free coordinates
    free = np.flatnonzero((phi > LOG_VAR_LOWER + 1e-6) & (phi < LOG_VAR_UPPER - 1e-6))
    if len(free):
        def sub(x):
            full = phi.copy()
            full[free] = np.clip(x, LOG_VAR_LOWER, LOG_VAR_UPPER)
            return lik.deviance(full)

        nm = optimize.minimize(sub, phi[free], method="Nelder-Mead",
                               options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        if nm.fun < lik.deviance(phi):
            phi = phi.copy()
            phi[free] = np.clip(nm.x, LOG_VAR_LOWER, LOG_VAR_UPPER)
        nit += int(nm.nit)
    # a component driven towards zero is reported on the floor
    g = lik.gradient(phi)
    for i in range(4):
        if phi[i] < math.log(total) - 20.0 and g[i] >= 0:
            trial = phi.copy()
            trial[i] = LOG_VAR_LOWER
            if lik.deviance(trial) <= lik.deviance(phi) + 1e-12:
                phi = trial

    var, Vinv, info, beta, r, dev = lik._pieces(phi)
    u = Vinv @ r
    blup = np.concatenate([var[i] * (lik.Zf[i].T @ u) for i in range(3)])
    g = lik.gradient(phi)
    return assemble_fit(design, phi, beta, la.inv(info), -0.5 * dev, g, blup,
                        lambda p, idx: fd_hessian(lik.gradient, p, index=idx), nit, True, "dense")


def dense_blup(design: Design, fit):
    """``G Z' V^-1 (y - X beta)`` evaluated densely at a fit's variances."""
    lik = DenseLikelihood(design)
    var = np.exp(np.asarray(fit.log_variances, dtype=float))
    V = var[3] * np.eye(lik.n)
    for v, K in zip(var[:3], lik.ZZt):
        V += v * K
    r = design.y - design.X @ fit.coef
    u = la.solve(V, r, assume_a="pos")
    return np.concatenate([var[i] * (lik.Zf[i].T @ u) for i in range(3)])
