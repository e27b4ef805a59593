"""Plug-in mediation and spillover effects with delta-method inference.

For a shift from ``(a', s')`` to ``(a, s)`` the six path effects are

=====  ==================================  ==========================================
tau1   A -> Y                              beta1 (a - a')
tau2   A -> M -> Y                         beta3 gamma1 (a - a')
tau3   A -> neighbours' M -> Y             beta4 gamma2 (a - a') delta1
tau4   neighbours' A -> Y                  beta2 delta2
tau5   neighbours' A -> M -> Y             beta3 gamma2 delta2
tau6   neighbours' A -> neighbours' M -> Y beta4 (gamma1 delta2 + gamma2 delta3)
=====  ==================================  ==========================================

and the total effect is their sum.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .fit import FitResult
from .graph import Network, NetworkDeltas, network_deltas
from .model import ExposureShift, ParamIndex

ESTIMANDS = ("tau1", "tau2", "tau3", "tau4", "tau5", "tau6")
PATHS = {
    "tau1": "A -> Y",
    "tau2": "A -> M -> Y",
    "tau3": "A -> M_nbr -> Y",
    "tau4": "A_nbr -> Y",
    "tau5": "A_nbr -> M -> Y",
    "tau6": "A_nbr -> M_nbr -> Y",
    "total": "sum of paths",
}
Z95 = 1.96
METHODS = ("general-delta", "closed-form")


class VarianceDiagnostic(UserWarning):
    """Emitted when a closed-form variance is negative or disagrees with the delta method."""


def _coefs(vec, idx: ParamIndex):
    b = lambda k: vec[idx.beta_at(k)]  # noqa: E731
    g = lambda k: vec[idx.gamma_at(k)]  # noqa: E731
    return b(1), b(2), b(3), b(4), g(1), g(2)


def effects_from_vector(vec, deltas: NetworkDeltas, shift: ExposureShift, p: int = 1) -> np.ndarray:
    """The six effects as a function of the flat parameter vector."""
    b1, b2, b3, b4, g1, g2 = _coefs(np.asarray(vec, dtype=float), ParamIndex(p))
    da = shift.a_diff
    d1, d2, d3 = deltas.delta1, deltas.delta2, deltas.delta3
    return np.array(
        [
            b1 * da,
            b3 * g1 * da,
            b4 * g2 * da * d1,
            b2 * d2,
            b3 * g2 * d2,
            b4 * g1 * d2 + b4 * g2 * d3,
        ]
    )


def effect_gradients(vec, deltas: NetworkDeltas, shift: ExposureShift, p: int = 1) -> np.ndarray:
    """Analytic Jacobian (6 x K) of :func:`effects_from_vector`."""
    vec = np.asarray(vec, dtype=float)
    idx = ParamIndex(p)
    b1, b2, b3, b4, g1, g2 = _coefs(vec, idx)
    da = shift.a_diff
    d1, d2, d3 = deltas.delta1, deltas.delta2, deltas.delta3
    B = idx.beta_at
    G = idx.gamma_at
    jac = np.zeros((6, idx.size))
    jac[0, B(1)] = da
    jac[1, B(3)] = g1 * da
    jac[1, G(1)] = b3 * da
    jac[2, B(4)] = g2 * da * d1
    jac[2, G(2)] = b4 * da * d1
    jac[3, B(2)] = d2
    jac[4, B(3)] = g2 * d2
    jac[4, G(2)] = b3 * d2
    jac[5, B(4)] = g1 * d2 + g2 * d3
    jac[5, G(1)] = b4 * d2
    jac[5, G(2)] = b4 * d3
    return jac


def estimands_point(fit: FitResult, deltas: NetworkDeltas, shift: ExposureShift) -> dict:
    """Point estimates of the six effects plus their sum under key ``total``."""
    tau = effects_from_vector(fit.params_hat.to_vector(), deltas, shift, fit.params_hat.p)
    out = dict(zip(ESTIMANDS, tau.tolist()))
    out["total"] = float(tau.sum())
    return out


def delta_method_variances(fit: FitResult, deltas: NetworkDeltas, shift: ExposureShift) -> np.ndarray:
    """``grad' J^{-1} grad`` for each effect."""
    jac = effect_gradients(fit.params_hat.to_vector(), deltas, shift, fit.params_hat.p)
    return np.einsum("ik,kl,il->i", jac, fit.info_inv, jac)


def closed_form_variances(fit: FitResult, deltas: NetworkDeltas, shift: ExposureShift) -> np.ndarray:
    """Published per-effect variance formulas, evaluated exactly as printed.

    Cross-covariances between outcome and mediator coefficients are omitted
    (they vanish in the observed information). The sixth formula is kept
    verbatim even though it does not match the delta method; see
    :func:`estimand_variances` for the diagnostic this triggers.
    """
    vec = fit.params_hat.to_vector()
    idx = fit.index
    b1, b2, b3, b4, g1, g2 = _coefs(vec, idx)
    j = fit.info_inv
    B = idx.beta_at
    G = idx.gamma_at
    jb = lambda k: j[B(k), B(k)]  # noqa: E731
    jg = lambda k, l=None: j[G(k), G(k if l is None else l)]  # noqa: E731
    da2 = float(shift.a_diff) ** 2
    d1, d2, d3 = deltas.delta1, deltas.delta2, deltas.delta3
    return np.array(
        [
            jb(1) * da2,
            (g1**2 * jb(3) + b3**2 * jg(1)) * da2,
            (g2**2 * jb(4) + b4**2 * jg(2)) * da2 * d1**2,
            jb(2) * d2**2,
            (g2**2 * jb(3) + b3**2 * jg(2)) * d2**2,
            jb(4) * (g1 * d1 + g2 * d2) ** 2
            + b4**2 * (d2**2 + jg(2) * d3**2)
            + 2.0 * b4**2 * jg(1, 2) * d2 * d3,
        ]
    )


def estimand_variances(
    fit: FitResult,
    deltas: NetworkDeltas,
    shift: ExposureShift,
    method: str = "general-delta",
) -> tuple[np.ndarray, list[str]]:
    """Variances of the six plug-in effects and any diagnostics raised.

    ``general-delta`` is the default. With ``closed-form`` a negative value
    falls back to the delta method for that effect. Either way, any effect
    where the two routes disagree beyond 1e-10 (relative) is reported.
    """
    if method not in METHODS:
        raise ValueError(f"unknown variance method {method!r}; choose from {METHODS}")
    delta = delta_method_variances(fit, deltas, shift)
    closed = closed_form_variances(fit, deltas, shift)
    diagnostics = []
    for k, name in enumerate(ESTIMANDS):
        gap = abs(closed[k] - delta[k])
        if gap > 1e-10 * max(1.0, abs(delta[k])):
            diagnostics.append(
                f"{name}: closed-form variance {closed[k]:.6g} differs from delta-method {delta[k]:.6g}"
            )
    out = delta.copy()
    if method == "closed-form":
        out = closed.copy()
        for k, name in enumerate(ESTIMANDS):
            if out[k] < 0.0:
                diagnostics.append(f"{name}: closed-form variance negative; using delta-method value")
                out[k] = delta[k]
    for msg in diagnostics:
        warnings.warn(msg, VarianceDiagnostic, stacklevel=2)
    return out, diagnostics


@dataclass
class EffectRow:
    name: str
    estimate: float
    se: float
    ci_lo: float
    ci_hi: float
    p_value: float

    def as_dict(self) -> dict:
        return {
            "estimand": self.name,
            "path": PATHS.get(self.name, ""),
            "estimate": self.estimate,
            "se": self.se,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "p": self.p_value,
        }


def wald_row(name: str, estimate: float, se: float) -> EffectRow:
    """Two-sided 95% normal interval and Wald p-value against zero.

    A zero standard error gives a degenerate interval; the p-value is then
    1 for a zero estimate and 0 otherwise.
    """
    se = float(max(se, 0.0))
    if se == 0.0:
        p = 1.0 if estimate == 0.0 else 0.0
    else:
        p = float(2.0 * norm.sf(abs(estimate) / se))
    return EffectRow(name, float(estimate), se, estimate - Z95 * se, estimate + Z95 * se, p)


@dataclass
class EstimandReport:
    rows: list[EffectRow]
    deltas: NetworkDeltas
    shift: ExposureShift
    variance_method: str
    diagnostics: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> EffectRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "effects": [r.as_dict() for r in self.rows],
            "deltas": self.deltas.as_dict(),
            "shift": self.shift.to_dict(),
            "variance_method": self.variance_method,
            "diagnostics": self.diagnostics,
            "metadata": self.metadata,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimand", "estimate", "se", "ci_lo", "ci_hi", "p"])
        for r in self.rows:
            w.writerow([r.name, repr(r.estimate), repr(r.se), repr(r.ci_lo), repr(r.ci_hi), repr(r.p_value)])
        return buf.getvalue()


def wald_intervals(
    estimates: dict,
    variances,
    deltas: NetworkDeltas,
    shift: ExposureShift,
    variance_method: str,
    total_variance: float | None = None,
    diagnostics=(),
) -> EstimandReport:
    rows = [wald_row(name, estimates[name], np.sqrt(max(v, 0.0))) for name, v in zip(ESTIMANDS, variances)]
    if total_variance is not None and "total" in estimates:
        rows.append(wald_row("total", estimates["total"], np.sqrt(max(total_variance, 0.0))))
    return EstimandReport(rows, deltas, shift, variance_method, list(diagnostics))


def effects_report(
    fit: FitResult,
    net: Network,
    shift: ExposureShift,
    method: str = "general-delta",
    metadata: dict | None = None,
) -> EstimandReport:
    """Point estimates, standard errors and intervals for all effects on ``net``."""
    deltas = network_deltas(net, shift)
    est = estimands_point(fit, deltas, shift)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", VarianceDiagnostic)
        var, diags = estimand_variances(fit, deltas, shift, method)
    jac = effect_gradients(fit.params_hat.to_vector(), deltas, shift, fit.params_hat.p).sum(axis=0)
    total_var = float(jac @ fit.info_inv @ jac)
    report = wald_intervals(est, var, deltas, shift, method, total_var, diags)
    report.metadata = dict(metadata or {})
    report.metadata.setdefault("transforms", {})
    return report


__all__ = [
    "ESTIMANDS",
    "EstimandReport",
    "EffectRow",
    "VarianceDiagnostic",
    "closed_form_variances",
    "delta_method_variances",
    "effect_gradients",
    "effects_from_vector",
    "effects_report",
    "estimand_variances",
    "estimands_point",
    "wald_intervals",
    "wald_row",
]
