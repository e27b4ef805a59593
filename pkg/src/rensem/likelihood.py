"""Marginal log-likelihood, score and Hessian.

Both Gaussian blocks have covariance ``var_err * I + var_re * E E^T``.
With ``E E^T = U diag(lam) U^T`` precomputed per network, rotating the
response and design by ``U^T`` turns every quadratic form, trace and
log-determinant into an O(N) sum over the effective eigenvalues
``d_k = var_err + var_re * lam_k``. Nothing here forms an inverse.

Derivatives are taken with respect to the variances themselves (not
standard deviations or logs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .graph import Network
from .model import Dataset, ParamIndex, RenSemParams, design_mediator, design_outcome

LOG_2PI = np.log(2.0 * np.pi)


class CovarianceError(ValueError):
    """Raised when an effective covariance is not positive definite."""


@dataclass(frozen=True)
class StructuredCovariance:
    """``var_err * I + var_re * E E^T`` held in spectral form."""

    var_err: float
    var_re: float
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @classmethod
    def for_network(cls, net: Network, var_err: float, var_re: float) -> "StructuredCovariance":
        lam, u = net.spectrum
        return cls(float(var_err), float(var_re), lam, u)

    @property
    def effective(self) -> np.ndarray:
        return self.var_err + self.var_re * self.eigvals

    def logdet(self) -> float:
        return float(np.sum(np.log(self.effective)))

    def solve(self, v) -> np.ndarray:
        u = self.eigvecs
        d = self.effective
        v = np.asarray(v, dtype=float)
        rot = u.T @ v
        return u @ (rot / d if rot.ndim == 1 else rot / d[:, None])

    def dense(self) -> np.ndarray:
        u = self.eigvecs
        return (u * self.effective) @ u.T


@dataclass(frozen=True)
class DesignMatrices:
    x_y: np.ndarray
    x_m: np.ndarray

    @classmethod
    def from_data(cls, data: Dataset) -> "DesignMatrices":
        return cls(
            x_y=design_outcome(data.net, data.a, data.m, data.c),
            x_m=design_mediator(data.net, data.a, data.c),
        )


@dataclass(frozen=True)
class LikelihoodParts:
    l_y: float
    l_m: float
    l_a: float

    @property
    def total(self) -> float:
        return self.l_y + self.l_m + self.l_a


class GaussianBlock:
    """One linear-Gaussian equation rotated into the eigenbasis of ``E E^T``.

    Parameters
    ----------
    response : ndarray
        Length-N response vector.
    design : ndarray
        ``N x k`` design matrix.
    net : Network
        Supplies the cached spectrum.
    name : str
        Label used in error messages (``"y"`` or ``"m"``).
    """

    def __init__(self, response, design, net: Network, name: str = "y"):
        lam, u = net.spectrum
        self.name = name
        self.lam = lam
        self.n = lam.size
        self.x = np.asarray(design, dtype=float)
        self.resp = np.asarray(response, dtype=float)
        self.rx = u.T @ self.x
        self.rr = u.T @ self.resp

    @property
    def k(self) -> int:
        return self.rx.shape[1]

    def effective(self, var_err: float, var_re: float) -> np.ndarray:
        d = var_err + var_re * self.lam
        if not np.all(d > 0.0) or not np.all(np.isfinite(d)):
            raise CovarianceError(
                f"covariance of block {self.name!r} is not positive definite "
                f"(var_err={var_err}, var_re={var_re}, min eigenvalue {d.min():.3g})"
            )
        return d

    def residual(self, coef) -> np.ndarray:
        return self.rr - self.rx @ coef

    def gls(self, var_err: float, var_re: float) -> np.ndarray:
        """Generalised least squares coefficients for fixed variances."""
        w = 1.0 / self.effective(var_err, var_re)
        xtwx = self.rx.T @ (self.rx * w[:, None])
        xtwy = self.rx.T @ (self.rr * w)
        return np.linalg.solve(xtwx, xtwy)

    def loglik(self, coef, var_err: float, var_re: float) -> float:
        d = self.effective(var_err, var_re)
        r = self.residual(coef)
        return float(-0.5 * self.n * LOG_2PI - 0.5 * np.sum(np.log(d)) - 0.5 * np.sum(r * r / d))

    def score(self, coef, var_err: float, var_re: float) -> np.ndarray:
        """Gradient in (coef, var_err, var_re)."""
        d = self.effective(var_err, var_re)
        lam = self.lam
        r = self.residual(coef)
        g_coef = self.rx.T @ (r / d)
        q2 = r * r / d**2
        g_err = -0.5 * np.sum(1.0 / d) + 0.5 * np.sum(q2)
        g_re = -0.5 * np.sum(lam / d) + 0.5 * np.sum(lam * q2)
        return np.r_[g_coef, g_err, g_re]

    def hessian(self, coef, var_err: float, var_re: float) -> np.ndarray:
        """Second derivatives in (coef, var_err, var_re)."""
        d = self.effective(var_err, var_re)
        lam = self.lam
        r = self.residual(coef)
        k = self.k
        h = np.empty((k + 2, k + 2))
        xwx = self.rx.T @ (self.rx / d[:, None])
        h[:k, :k] = -0.5 * (xwx + xwx.T)
        rd2 = r / d**2
        h[:k, k] = h[k, :k] = -self.rx.T @ rd2
        h[:k, k + 1] = h[k + 1, :k] = -self.rx.T @ (lam * rd2)
        r2d3 = r * r / d**3
        h[k, k] = 0.5 * np.sum(1.0 / d**2) - np.sum(r2d3)
        h[k + 1, k + 1] = 0.5 * np.sum(lam**2 / d**2) - np.sum(lam**2 * r2d3)
        h[k, k + 1] = h[k + 1, k] = 0.5 * np.sum(lam / d**2) - np.sum(lam * r2d3)
        return h


def logistic_design(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    c = c.reshape(c.shape[0], -1)
    return np.column_stack([np.ones(c.shape[0]), c])


def logistic_loglik(a, xa, alpha) -> float:
    eta = xa @ alpha
    # A log(pi / (1 - pi)) + log(1 - pi) = A eta + log(1 - pi)
    return float(np.sum(a * eta + log_expit(-eta)))


def logistic_score(a, xa, alpha) -> np.ndarray:
    return xa.T @ (a - expit(xa @ alpha))


def logistic_hessian(xa, alpha) -> np.ndarray:
    pi = expit(xa @ alpha)
    h = (xa.T * (pi * (1.0 - pi))) @ xa
    return -0.5 * (h + h.T)


class LikelihoodModel:
    """Data bound to its rotated blocks, evaluable at many parameter points.

    Rotation costs O(N^2 k) once; afterwards each evaluation is O(N k^2).
    """

    def __init__(self, data: Dataset):
        self.data = data
        self.index = ParamIndex(data.p)
        dm = DesignMatrices.from_data(data)
        self.design = dm
        self.y_block = GaussianBlock(data.y, dm.x_y, data.net, "y")
        self.m_block = GaussianBlock(data.m, dm.x_m, data.net, "m")
        self.xa = logistic_design(data.c)

    def _check(self, params: RenSemParams):
        if params.p != self.data.p:
            raise ValueError(f"parameters have p={params.p}, data has p={self.data.p}")

    def loglik(self, params: RenSemParams) -> LikelihoodParts:
        self._check(params)
        return LikelihoodParts(
            l_y=self.y_block.loglik(params.beta, params.var_y, params.var_by),
            l_m=self.m_block.loglik(params.gamma, params.var_m, params.var_bm),
            l_a=logistic_loglik(self.data.a, self.xa, params.alpha),
        )

    def score(self, params: RenSemParams) -> np.ndarray:
        self._check(params)
        idx = self.index
        g = np.zeros(idx.size)
        g[idx.y_block] = self.y_block.score(params.beta, params.var_y, params.var_by)
        g[idx.m_block] = self.m_block.score(params.gamma, params.var_m, params.var_bm)
        g[idx.alpha] = logistic_score(self.data.a, self.xa, params.alpha)
        return g

    def hessian(self, params: RenSemParams) -> np.ndarray:
        self._check(params)
        idx = self.index
        h = np.zeros((idx.size, idx.size))
        yb, mb = idx.y_block, idx.m_block
        h[np.ix_(yb, yb)] = self.y_block.hessian(params.beta, params.var_y, params.var_by)
        h[np.ix_(mb, mb)] = self.m_block.hessian(params.gamma, params.var_m, params.var_bm)
        h[idx.alpha, idx.alpha] = logistic_hessian(self.xa, params.alpha)
        return h


def loglik(data: Dataset, params: RenSemParams) -> LikelihoodParts:
    return LikelihoodModel(data).loglik(params)


def score(data: Dataset, params: RenSemParams) -> np.ndarray:
    """Analytic gradient of the log-likelihood in flat parameter order."""
    return LikelihoodModel(data).score(params)


def hessian(data: Dataset, params: RenSemParams) -> np.ndarray:
    """Analytic Hessian; blocks linking the outcome, mediator and exposure parts are zero."""
    return LikelihoodModel(data).hessian(params)


def observed_information(data: Dataset, params: RenSemParams) -> np.ndarray:
    return -hessian(data, params)


__all__ = [
    "CovarianceError",
    "DesignMatrices",
    "GaussianBlock",
    "LikelihoodModel",
    "LikelihoodParts",
    "StructuredCovariance",
    "hessian",
    "logistic_design",
    "logistic_hessian",
    "logistic_loglik",
    "logistic_score",
    "loglik",
    "observed_information",
    "score",
]
