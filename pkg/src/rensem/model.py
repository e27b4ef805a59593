"""Model parameters, datasets and forward simulation.

The generative system has three layers: a logistic exposure model, a
linear mediator equation and a linear outcome equation. Both continuous
equations carry random intercepts propagated through the full adjacency
matrix (self plus neighbours), giving marginal covariances of the form
``var_err * I + var_re * E E^T``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .graph import Network

VARIANCE_NAMES = ("var_y", "var_by", "var_m", "var_bm")


@dataclass(frozen=True)
class RenSemParams:
    """Full parameter vector of the structural system.

    ``beta`` has ``5 + 2p`` entries ordered (intercept, A, S1(A), M, S1(M),
    C, S1(C)); ``gamma`` has ``3 + 2p`` entries ordered (intercept, A,
    S1(A), C, S1(C)); ``alpha`` holds the logistic intercept and ``p``
    slopes. Variances are on the variance scale, not standard deviations.
    """

    beta: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    var_y: float
    var_by: float
    var_m: float
    var_bm: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        gamma = np.asarray(self.gamma, dtype=float).ravel()
        alpha = np.asarray(self.alpha, dtype=float).ravel()
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "alpha", alpha)
        p = alpha.size - 1
        if p < 1:
            raise ValueError("alpha needs an intercept and at least one slope")
        if beta.size != 5 + 2 * p or gamma.size != 3 + 2 * p:
            raise ValueError(
                f"inconsistent lengths for p={p}: beta {beta.size} (want {5 + 2 * p}), "
                f"gamma {gamma.size} (want {3 + 2 * p})"
            )
        for name in VARIANCE_NAMES:
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be a nonnegative finite number, got {v}")
            object.__setattr__(self, name, v)

    @property
    def p(self) -> int:
        return self.alpha.size - 1

    @property
    def n_params(self) -> int:
        return self.beta.size + self.gamma.size + self.alpha.size + 4

    def to_vector(self) -> np.ndarray:
        """Flatten in the order (beta, gamma, alpha, var_y, var_by, var_m, var_bm)."""
        return np.concatenate(
            [self.beta, self.gamma, self.alpha, [self.var_y, self.var_by, self.var_m, self.var_bm]]
        )

    @classmethod
    def from_vector(cls, vec, p: int = 1) -> "RenSemParams":
        vec = np.asarray(vec, dtype=float)
        idx = ParamIndex(p)
        return cls(
            beta=vec[idx.beta],
            gamma=vec[idx.gamma],
            alpha=vec[idx.alpha],
            var_y=vec[idx.var_y],
            var_by=vec[idx.var_by],
            var_m=vec[idx.var_m],
            var_bm=vec[idx.var_bm],
        )

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "alpha": self.alpha.tolist(),
            "var_y": self.var_y,
            "var_by": self.var_by,
            "var_m": self.var_m,
            "var_bm": self.var_bm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RenSemParams":
        missing = {"beta", "gamma", "alpha", *VARIANCE_NAMES} - set(d)
        if missing:
            raise ValueError(f"parameter document missing keys: {sorted(missing)}")
        return cls(**{k: d[k] for k in ("beta", "gamma", "alpha", *VARIANCE_NAMES)})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RenSemParams":
        return cls.from_dict(json.loads(text))


class ParamIndex:
    """Slices and positions of each parameter block inside the flat vector."""

    def __init__(self, p: int = 1):
        self.p = p
        nb, ng, na = 5 + 2 * p, 3 + 2 * p, 1 + p
        self.beta = slice(0, nb)
        self.gamma = slice(nb, nb + ng)
        self.alpha = slice(nb + ng, nb + ng + na)
        base = nb + ng + na
        self.var_y, self.var_by, self.var_m, self.var_bm = base, base + 1, base + 2, base + 3
        self.size = base + 4

    def beta_at(self, k: int) -> int:
        return self.beta.start + k

    def gamma_at(self, k: int) -> int:
        return self.gamma.start + k

    @property
    def y_block(self) -> np.ndarray:
        """Indices of (beta, var_y, var_by)."""
        return np.r_[np.arange(self.beta.start, self.beta.stop), self.var_y, self.var_by]

    @property
    def m_block(self) -> np.ndarray:
        """Indices of (gamma, var_m, var_bm)."""
        return np.r_[np.arange(self.gamma.start, self.gamma.stop), self.var_m, self.var_bm]

    def names(self) -> list[str]:
        p = self.p
        c = [f"c{k + 1}" for k in range(p)]
        beta = ["beta0", "beta1", "beta2", "beta3", "beta4"]
        beta += [f"beta5_{x}" for x in c] if p > 1 else ["beta5"]
        beta += [f"beta6_{x}" for x in c] if p > 1 else ["beta6"]
        gamma = ["gamma0", "gamma1", "gamma2"]
        gamma += [f"gamma3_{x}" for x in c] if p > 1 else ["gamma3"]
        gamma += [f"gamma4_{x}" for x in c] if p > 1 else ["gamma4"]
        alpha = ["alpha0"] + ([f"alpha_{x}" for x in c] if p > 1 else ["alpha1"])
        return beta + gamma + alpha + list(VARIANCE_NAMES)


@dataclass(frozen=True)
class ExposureShift:
    """Intervention from ``(a_from, s_from)`` to ``(a_to, s_to)``.

    ``a_*`` are the unit's own exposure levels and ``s_*`` the targeted
    share of treated first-degree neighbours.
    """

    a_from: int = 0
    a_to: int = 1
    s_from: float = 0.0
    s_to: float = 1.0

    def __post_init__(self):
        for name in ("a_from", "a_to"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")
        for name in ("s_from", "s_to"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def a_diff(self) -> int:
        return self.a_to - self.a_from

    def to_dict(self) -> dict:
        return {"a_from": self.a_from, "a_to": self.a_to, "s_from": self.s_from, "s_to": self.s_to}

    @classmethod
    def from_dict(cls, d: dict) -> "ExposureShift":
        return cls(int(d["a_from"]), int(d["a_to"]), float(d["s_from"]), float(d["s_to"]))


@dataclass
class Dataset:
    """Per-node exposures, mediators, outcomes and confounders on a network."""

    net: Network
    a: np.ndarray
    m: np.ndarray
    y: np.ndarray
    c: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.net.n_nodes
        self.a = np.asarray(self.a, dtype=float).ravel()
        self.m = np.asarray(self.m, dtype=float).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float)
        self.c = c.reshape(-1, 1) if c.ndim == 1 else c
        for name, col in (("a", self.a), ("m", self.m), ("y", self.y), ("c", self.c)):
            if col.shape[0] != n:
                raise ValueError(f"column {name} has {col.shape[0]} rows, network has {n} nodes")
        if not np.all((self.a == 0.0) | (self.a == 1.0)):
            raise ValueError("exposure must be binary")

    @property
    def n(self) -> int:
        return self.net.n_nodes

    @property
    def p(self) -> int:
        return self.c.shape[1]


@dataclass(frozen=True)
class ConfounderSpec:
    """I.i.d. confounder distribution: ``normal`` (loc, scale) or ``uniform`` (low=loc, high=loc+scale)."""

    kind: str = "normal"
    loc: float = 0.0
    scale: float = 1.0
    p: int = 1

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "normal":
            return rng.normal(self.loc, self.scale, size=(n, self.p))
        if self.kind == "uniform":
            return rng.uniform(self.loc, self.loc + self.scale, size=(n, self.p))
        raise ValueError(f"unknown confounder distribution {self.kind!r}")


def logistic_prob(c_row, alpha) -> float | np.ndarray:
    """Exposure probability ``expit(alpha_0 + alpha_1' c)``.

    Accepts a single confounder row or an ``N x p`` matrix.
    """
    alpha = np.asarray(alpha, dtype=float)
    c = np.asarray(c_row, dtype=float)
    if c.shape[-1] != alpha.size - 1:
        raise ValueError(f"confounder dimension {c.shape[-1]} does not match alpha ({alpha.size - 1} slopes)")
    eta = alpha[0] + c @ alpha[1:]
    return expit(eta)


def design_mediator(net: Network, a, c) -> np.ndarray:
    """Mediator design ``(1, A, S1(A), C, S1(C))``."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float).reshape(net.n_nodes, -1)
    w = net.row_normalized
    return np.column_stack([np.ones(net.n_nodes), a, w @ a, c, w @ c])


def design_outcome(net: Network, a, m, c) -> np.ndarray:
    """Outcome design ``(1, A, S1(A), M, S1(M), C, S1(C))``."""
    a = np.asarray(a, dtype=float)
    m = np.asarray(m, dtype=float)
    c = np.asarray(c, dtype=float).reshape(net.n_nodes, -1)
    w = net.row_normalized
    return np.column_stack([np.ones(net.n_nodes), a, w @ a, m, w @ m, c, w @ c])


def _structured_noise(net: Network, var_err: float, var_re: float, rng: np.random.Generator) -> np.ndarray:
    n = net.n_nodes
    b = rng.normal(0.0, np.sqrt(var_re), size=n)
    eps = rng.normal(0.0, np.sqrt(var_err), size=n)
    return net.adjacency @ b + eps


def simulate_mediator(net, params: RenSemParams, a, c, rng) -> np.ndarray:
    return design_mediator(net, a, c) @ params.gamma + _structured_noise(net, params.var_m, params.var_bm, rng)


def simulate_outcome(net, params: RenSemParams, a, m, c, rng) -> np.ndarray:
    return design_outcome(net, a, m, c) @ params.beta + _structured_noise(net, params.var_y, params.var_by, rng)


def simulate_dataset(
    net: Network,
    params: RenSemParams,
    confounder_spec: ConfounderSpec | None = None,
    seed=None,
) -> Dataset:
    """Draw one dataset from the structural system on a fixed network.

    Draw order is confounders, exposures, mediator noise, outcome noise,
    so a fixed ``seed`` reproduces the dataset bit for bit.
    """
    spec = confounder_spec or ConfounderSpec(p=params.p)
    if spec.p != params.p:
        raise ValueError(f"confounder spec has p={spec.p}, parameters expect p={params.p}")
    rng = np.random.default_rng(seed)
    n = net.n_nodes
    c = spec.draw(rng, n)
    a = (rng.random(n) < logistic_prob(c, params.alpha)).astype(float)
    m = simulate_mediator(net, params, a, c, rng)
    y = simulate_outcome(net, params, a, m, c, rng)
    return Dataset(net, a, m, y, c)


def design_truth(design: str = "network1") -> RenSemParams:
    """Parameter values of the two reference simulation designs.

    ``network1`` uses unit variances for errors and random effects;
    ``network2`` uses random-effect standard deviations of 0.5.
    """
    sd_b = {"network1": 1.0, "network2": 0.5}[design]
    return RenSemParams(
        beta=[-2.0, 1.5, 0.8, 1.2, 0.4, 2.1, 1.3],
        gamma=[-1.0, 2.0, 0.9, 1.8, 0.7],
        alpha=[0.0, 0.0],
        var_y=1.0,
        var_by=sd_b**2,
        var_m=1.0,
        var_bm=sd_b**2,
    )


__all__ = [
    "ConfounderSpec",
    "Dataset",
    "ExposureShift",
    "ParamIndex",
    "RenSemParams",
    "design_mediator",
    "design_outcome",
    "logistic_prob",
    "design_truth",
    "simulate_dataset",
    "simulate_mediator",
    "simulate_outcome",
]
