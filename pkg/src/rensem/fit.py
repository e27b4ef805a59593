"""Maximum-likelihood estimation.

The log-likelihood splits into an outcome block, a mediator block and a
logistic exposure block with no shared parameters, so each is maximised
on its own and the results are stacked. Each Gaussian block is profiled:
for fixed variances the coefficients are the GLS solution, and the two
variances are found by a safeguarded Newton search on the log scale using
the exact profile Hessian.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .graph import Network
from .likelihood import (
    CovarianceError,
    GaussianBlock,
    LikelihoodModel,
    logistic_design,
    logistic_hessian,
    logistic_loglik,
    logistic_score,
)
from .model import Dataset, ParamIndex, RenSemParams

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-10
PROFILE_GTOL = 1e-7
PROFILE_FTOL = 1e-10
MAX_OUTER = 500
LOGISTIC_GTOL = 1e-8
LOGISTIC_MAXITER = 100
SEPARATION_NORM = 30.0
JOINT_GTOL = 1e-6
# accepted when no step can improve the loglik beyond rounding
STALL_GTOL = 5e-7


class FitError(RuntimeError):
    """Base class for estimation failures."""


class SeparationError(FitError):
    """Exposure is (quasi-)perfectly predicted; the logistic MLE does not exist."""


class RankDeficiencyError(FitError):
    """A design matrix does not have full column rank."""


class ConvergenceError(FitError):
    """The optimiser hit its iteration cap."""


class SingularInformationError(FitError):
    """The observed information matrix is not positive definite."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(message)
        self.condition_number = condition_number


def _check_rank(x: np.ndarray, what: str):
    rank = np.linalg.matrix_rank(x)
    if rank < x.shape[1]:
        raise RankDeficiencyError(f"{what} design has rank {rank} < {x.shape[1]} columns")


@dataclass
class LogisticFit:
    alpha: np.ndarray
    hessian: np.ndarray
    loglik: float
    iterations: int
    gradient_norm: float


def fit_logistic(a, c, init=None) -> LogisticFit:
    """Newton-Raphson for the exposure model ``logit P(A=1) = alpha_0 + alpha_1' C``.

    Raises
    ------
    SeparationError
        All exposures equal, or the coefficient norm diverges past 30.
    RankDeficiencyError
        The design ``(1, C)`` is rank deficient.
    """
    a = np.asarray(a, dtype=float)
    xa = logistic_design(c)
    _check_rank(xa, "exposure")
    if a.min() == a.max():
        raise SeparationError(f"all exposures equal {a[0]:g}; logistic MLE does not exist")
    alpha = np.zeros(xa.shape[1]) if init is None else np.asarray(init, dtype=float).copy()
    ll = logistic_loglik(a, xa, alpha)
    for it in range(1, LOGISTIC_MAXITER + 1):
        g = logistic_score(a, xa, alpha)
        if np.linalg.norm(g) <= LOGISTIC_GTOL:
            return LogisticFit(alpha, logistic_hessian(xa, alpha), ll, it - 1, float(np.linalg.norm(g)))
        h = logistic_hessian(xa, alpha)
        try:
            step = np.linalg.solve(-h, g)
        except np.linalg.LinAlgError:
            raise SeparationError("logistic information became singular") from None
        t = 1.0
        while True:
            cand = alpha + t * step
            ll_new = logistic_loglik(a, xa, cand)
            if ll_new >= ll - 1e-12 or t < 1e-8:
                break
            t *= 0.5
        alpha, ll = cand, ll_new
        if np.linalg.norm(alpha) > SEPARATION_NORM:
            raise SeparationError(f"coefficient norm {np.linalg.norm(alpha):.1f} diverging; data are separated")
    g = logistic_score(a, xa, alpha)
    if np.linalg.norm(g) <= LOGISTIC_GTOL:
        return LogisticFit(alpha, logistic_hessian(xa, alpha), ll, LOGISTIC_MAXITER, float(np.linalg.norm(g)))
    raise ConvergenceError(f"logistic Newton did not converge in {LOGISTIC_MAXITER} iterations")


@dataclass
class GaussianFit:
    coef: np.ndarray
    var_err: float
    var_re: float
    hessian: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    profile_gradient: np.ndarray
    boundary: tuple[bool, bool]


def _profile_eval(block: GaussianBlock, v: np.ndarray):
    coef = block.gls(v[0], v[1])
    ll = block.loglik(coef, v[0], v[1])
    s = block.score(coef, v[0], v[1])
    h = block.hessian(coef, v[0], v[1])
    k = block.k
    # profile Hessian: Schur complement of the coefficient block
    hvv = h[k:, k:] - h[k:, :k] @ np.linalg.solve(h[:k, :k], h[:k, k:])
    return ll, s[k:], hvv, coef


def default_start(block: GaussianBlock) -> np.ndarray:
    """Method-of-moments start: half the OLS residual variance to each component."""
    coef, *_ = np.linalg.lstsq(block.rx, block.rr, rcond=None)
    r = block.rr - block.rx @ coef
    s2 = max(float(r @ r) / block.n, 1e-6)
    return np.array([0.5 * s2, 0.5 * s2 / float(np.mean(block.lam))])


def fit_gaussian_block(response, design, net: Network, init=None, name: str = "y") -> GaussianFit:
    """Profiled ML for ``response ~ N(design @ coef, var_err I + var_re E E^T)``.

    Parameters
    ----------
    init : sequence of two floats, optional
        Starting ``(var_err, var_re)``; defaults to :func:`default_start`.

    Raises
    ------
    RankDeficiencyError
        When ``design`` is rank deficient.
    ConvergenceError
        After 500 outer iterations without meeting the tolerances.

    Notes
    -----
    A variance that reaches the floor with a negative gradient is frozen
    there and flagged in ``boundary``; this is reported, not raised.
    """
    design = np.asarray(design, dtype=float)
    _check_rank(design, name)
    block = GaussianBlock(response, design, net, name)
    v = np.maximum(np.asarray(default_start(block) if init is None else init, dtype=float), VAR_FLOOR)
    ll, g, h, coef = _profile_eval(block, v)
    frozen = np.zeros(2, dtype=bool)
    ll_prev = -np.inf
    for it in range(1, MAX_OUTER + 1):
        # KKT: freeze variances sitting on the floor with a downhill gradient
        frozen = (v <= VAR_FLOOR * (1 + 1e-9)) & (g < 0)
        free = ~frozen
        gfree = g[free]
        rel = abs(ll - ll_prev) / max(1.0, abs(ll))
        if np.all(np.abs(gfree) <= PROFILE_GTOL) and rel <= PROFILE_FTOL:
            return GaussianFit(coef, v[0], v[1], block.hessian(coef, v[0], v[1]), ll, it - 1, True, g, tuple(frozen))
        if not free.any():
            return GaussianFit(coef, v[0], v[1], block.hessian(coef, v[0], v[1]), ll, it - 1, True, g, tuple(frozen))
        # Newton on log-variances for the free components
        vf = v[free]
        gt = vf * gfree
        ht = np.outer(vf, vf) * h[np.ix_(free, free)] + np.diag(vf * gfree)
        try:
            evals = np.linalg.eigvalsh(ht)
            step = np.linalg.solve(ht, -gt) if evals.max() < 0 else None
        except np.linalg.LinAlgError:
            step = None
        if step is None or gt @ step <= 0:
            step = gt / max(1.0, np.abs(ht).max())
        # shrink uniformly (never clip componentwise, which can turn the step downhill)
        step = step * min(1.0, 3.0 / np.abs(step).max())
        slope = float(gt @ step)
        noise = 1e-13 * max(1.0, abs(ll))
        gmax = np.abs(gfree).max()
        t = 1.0
        accepted = False
        while t > 1e-10:
            cand = v.copy()
            cand[free] = np.maximum(vf * np.exp(t * step), VAR_FLOOR)
            try:
                ll_c, g_c, h_c, coef_c = _profile_eval(block, cand)
            except (CovarianceError, np.linalg.LinAlgError):
                t *= 0.5
                continue
            # near the optimum ll differences drown in rounding; let the gradient decide
            if ll_c >= ll + 1e-4 * t * slope or (ll_c >= ll - noise and np.abs(g_c[free]).max() < gmax):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no ascent along the step: accept only if stationary to working precision
            ok = bool(np.all(np.abs(gfree) <= STALL_GTOL))
            return GaussianFit(coef, v[0], v[1], block.hessian(coef, v[0], v[1]), ll, it, ok, g, tuple(frozen))
        stalled = ll_c - ll <= noise
        ll_prev = ll
        v, ll, g, h, coef = cand, ll_c, g_c, h_c, coef_c
        if stalled and np.all(np.abs(g[free]) <= STALL_GTOL):
            return GaussianFit(coef, v[0], v[1], block.hessian(coef, v[0], v[1]), ll, it, True, g, tuple(frozen))
    raise ConvergenceError(f"block {name!r}: no convergence after {MAX_OUTER} outer iterations")


@dataclass
class FitResult:
    """Joint MLE with its observed information."""

    params_hat: RenSemParams
    info: np.ndarray
    info_inv: np.ndarray
    loglik_at_opt: float
    iterations: dict
    converged: bool
    gradient_norm: float
    boundary: dict = field(default_factory=dict)
    n_nodes: int = 0

    @property
    def index(self) -> ParamIndex:
        return ParamIndex(self.params_hat.p)

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.info_inv), 0.0, None))

    def to_dict(self) -> dict:
        idx = self.index
        names = idx.names()
        est = self.params_hat.to_vector()
        return {
            "parameters": self.params_hat.to_dict(),
            "table": [
                {"name": n, "estimate": float(e), "se": float(s)}
                for n, e, s in zip(names, est, self.standard_errors)
            ],
            "info_inv": self.info_inv.tolist(),
            "loglik": self.loglik_at_opt,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "boundary": self.boundary,
            "n_nodes": self.n_nodes,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        params = RenSemParams.from_dict(d["parameters"])
        info_inv = np.asarray(d["info_inv"], dtype=float)
        return cls(
            params_hat=params,
            info=np.linalg.inv(info_inv),
            info_inv=info_inv,
            loglik_at_opt=float(d["loglik"]),
            iterations=dict(d["iterations"]),
            converged=bool(d["converged"]),
            gradient_norm=float(d["gradient_norm"]),
            boundary=dict(d.get("boundary", {})),
            n_nodes=int(d.get("n_nodes", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))


def invert_information(info: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite information matrix via Cholesky."""
    try:
        cf = linalg.cho_factor(info, lower=True)
    except linalg.LinAlgError:
        cond = float(np.linalg.cond(info))
        raise SingularInformationError(
            f"observed information not positive definite (condition number {cond:.3g})", cond
        ) from None
    inv = linalg.cho_solve(cf, np.eye(info.shape[0]))
    return 0.5 * (inv + inv.T)


def fit_mle(data: Dataset, init: RenSemParams | None = None) -> FitResult:
    """Fit all three blocks and assemble the joint estimate and information.

    ``init`` only supplies starting variances for the Gaussian blocks and a
    starting point for the logistic fit; coefficients are always profiled.
    """
    model = LikelihoodModel(data)
    net = data.net
    yfit = fit_gaussian_block(
        data.y, model.design.x_y, net, None if init is None else (init.var_y, init.var_by), "y"
    )
    mfit = fit_gaussian_block(
        data.m, model.design.x_m, net, None if init is None else (init.var_m, init.var_bm), "m"
    )
    afit = fit_logistic(data.a, data.c, None if init is None else init.alpha)
    params = RenSemParams(
        beta=yfit.coef,
        gamma=mfit.coef,
        alpha=afit.alpha,
        var_y=yfit.var_err,
        var_by=yfit.var_re,
        var_m=mfit.var_err,
        var_bm=mfit.var_re,
    )
    info = -model.hessian(params)
    info = 0.5 * (info + info.T)
    boundary = {
        "var_y": bool(yfit.boundary[0]),
        "var_by": bool(yfit.boundary[1]),
        "var_m": bool(mfit.boundary[0]),
        "var_bm": bool(mfit.boundary[1]),
    }
    try:
        info_inv = invert_information(info)
    except SingularInformationError as exc:
        on = [k for k, b in boundary.items() if b]
        if not on:
            raise
        # the estimate sits on the variance floor, where the information need not be definite
        raise SingularInformationError(
            f"{exc} with {', '.join(on)} on the boundary", exc.condition_number
        ) from None
    grad = model.score(params)
    idx = model.index
    projected = grad.copy()
    for name, on in boundary.items():
        if on:
            projected[getattr(idx, name)] = 0.0
    gnorm = float(np.linalg.norm(projected))
    converged = yfit.converged and mfit.converged and gnorm <= JOINT_GTOL
    if not converged:
        log.warning("fit did not meet joint gradient tolerance (norm %.3g)", gnorm)
    return FitResult(
        params_hat=params,
        info=info,
        info_inv=info_inv,
        loglik_at_opt=yfit.loglik + mfit.loglik + afit.loglik,
        iterations={"y": yfit.iterations, "m": mfit.iterations, "a": afit.iterations},
        converged=converged,
        gradient_norm=gnorm,
        boundary=boundary,
        n_nodes=data.n,
    )


__all__ = [
    "ConvergenceError",
    "FitError",
    "FitResult",
    "GaussianFit",
    "LogisticFit",
    "RankDeficiencyError",
    "SeparationError",
    "SingularInformationError",
    "default_start",
    "fit_gaussian_block",
    "fit_logistic",
    "fit_mle",
    "invert_information",
]
