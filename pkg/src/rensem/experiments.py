"""Monte-Carlo replication harness.

Each replication simulates a dataset on a fixed network, fits the model and
computes the six effects with standard errors. Seeds are derived from the
master seed with :class:`numpy.random.SeedSequence` spawn keys, so a run
gives the same numbers regardless of the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimands import ESTIMANDS, effects_from_vector, effects_report
from .fit import FitError, fit_mle
from .graph import Network, gen_erdos_renyi, gen_ring, network_deltas
from .likelihood import CovarianceError
from .model import ConfounderSpec, ExposureShift, ParamIndex, RenSemParams, design_truth, simulate_dataset

Z95 = 1.96
TABLE_COLUMNS = ("Size", "Effect", "Actual", "Bias", "RRMSE", "ESE", "ASE", "CP")
PRESETS = {
    "table1": {"network": "ring", "truth": "network1"},
    "tableS3": {"network": "erdos-renyi", "target_degree": 10.0, "truth": "network2"},
}
DEFAULT_SIZES = (100, 200, 800)
REFERENCE_REPLICATIONS = 500


@dataclass
class ExperimentConfig:
    """Settings for one Monte-Carlo study on a single network size."""

    network: str = "ring"
    n_nodes: int = 100
    replications: int = 100
    truth: RenSemParams = field(default_factory=design_truth)
    shift: ExposureShift = field(default_factory=ExposureShift)
    seed: int = 0
    workers: int = 1
    target_degree: float | None = None

    def __post_init__(self):
        if self.network not in ("ring", "erdos-renyi"):
            raise ValueError(f"unknown network kind {self.network!r}")
        if self.network == "erdos-renyi" and self.target_degree is None:
            raise ValueError("erdos-renyi networks need target_degree")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.n_nodes < 3:
            raise ValueError("n_nodes must be at least 3")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def to_dict(self) -> dict:
        return {
            "network": self.network,
            "target_degree": self.target_degree,
            "n_nodes": self.n_nodes,
            "replications": self.replications,
            "truth": self.truth.to_dict(),
            "shift": self.shift.to_dict(),
            "seed": self.seed,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        truth = d.get("truth", "network1")
        truth = design_truth(truth) if isinstance(truth, str) else RenSemParams.from_dict(truth)
        td = d.get("target_degree")
        return cls(
            network=d.get("network", "ring"),
            n_nodes=int(d["n_nodes"]),
            replications=int(d.get("replications", 100)),
            truth=truth,
            shift=ExposureShift.from_dict(d["shift"]) if "shift" in d else ExposureShift(),
            seed=int(d.get("seed", 0)),
            workers=int(d.get("workers", 1)),
            target_degree=None if td is None else float(td),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def network_seed(seed: int, n_nodes: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(0, n_nodes))


def replication_seed(seed: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(1, r))


def build_network(cfg: ExperimentConfig) -> Network:
    """The study network; random graphs are drawn once per (size, seed)."""
    if cfg.network == "ring":
        return gen_ring(cfg.n_nodes)
    return gen_erdos_renyi(cfg.n_nodes, cfg.target_degree, network_seed(cfg.seed, cfg.n_nodes))


@dataclass
class Replication:
    index: int
    ok: bool
    estimates: np.ndarray | None = None
    ses: np.ndarray | None = None
    params: np.ndarray | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        out = {"index": self.index, "ok": self.ok}
        if self.ok:
            out["estimates"] = self.estimates.tolist()
            out["se"] = self.ses.tolist()
        else:
            out["error"] = self.error
        return out


def run_replication(net: Network, cfg: ExperimentConfig, r: int) -> Replication:
    data = simulate_dataset(net, cfg.truth, ConfounderSpec(p=cfg.truth.p), seed=replication_seed(cfg.seed, r))
    try:
        fit = fit_mle(data)
        if not fit.converged:
            return Replication(r, False, error=f"not converged (gradient norm {fit.gradient_norm:.3g})")
        rep = effects_report(fit, net, cfg.shift)
    except (FitError, CovarianceError, np.linalg.LinAlgError) as exc:
        return Replication(r, False, error=f"{type(exc).__name__}: {exc}")
    est = np.array([rep[k].estimate for k in ESTIMANDS])
    se = np.array([rep[k].se for k in ESTIMANDS])
    return Replication(r, True, est, se, fit.params_hat.to_vector())


def _run_chunk(args):
    net, cfg, indices = args
    return [run_replication(net, cfg, r) for r in indices]


@dataclass
class EffectMetrics:
    name: str
    actual: float
    bias: float
    rrmse: float | None
    ese: float | None
    ase: float
    coverage: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MetricsTable:
    """Per-effect summary of a Monte-Carlo study at one network size."""

    n_nodes: int
    rows: list[EffectMetrics]
    n_ok: int
    n_failed: int
    mean_params: np.ndarray | None = None

    def __getitem__(self, name: str) -> EffectMetrics:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "n_ok": self.n_ok,
            "n_failed": self.n_failed,
            "rows": [r.as_dict() for r in self.rows],
            "mean_params": None if self.mean_params is None else self.mean_params.tolist(),
        }


def summarize(actual: np.ndarray, estimates: np.ndarray, ses: np.ndarray) -> list[EffectMetrics]:
    """Bias, relative RMSE, ESE, ASE and coverage for each effect.

    ``estimates`` and ``ses`` are ``R x 6``. RRMSE is ``None`` for a zero
    truth and ESE is ``None`` when only one replication is available.
    """
    rows = []
    n_rep = estimates.shape[0]
    for k, name in enumerate(ESTIMANDS):
        tau = float(actual[k])
        est = estimates[:, k]
        se = ses[:, k]
        rrmse = None if tau == 0.0 else float(np.sqrt(np.mean(((est - tau) / tau) ** 2)))
        ese = float(np.std(est, ddof=1)) if n_rep > 1 else None
        cover = float(np.mean(np.abs(est - tau) <= Z95 * se))
        rows.append(EffectMetrics(name, tau, float(est.mean() - tau), rrmse, ese, float(se.mean()), cover))
    return rows


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    table: MetricsTable
    log: list[Replication]
    deltas: dict
    wall_clock: float

    def metadata(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_ok": self.table.n_ok,
            "n_failed": self.table.n_failed,
            "failures": [rep.to_dict() for rep in self.log if not rep.ok],
            "deltas": self.deltas,
            "wall_clock_seconds": self.wall_clock,
        }


def run_experiment(cfg: ExperimentConfig, net: Network | None = None) -> ExperimentResult:
    """Run ``cfg.replications`` independent simulate-fit-estimate cycles.

    Raises
    ------
    RuntimeError
        If every replication fails.
    """
    t0 = time.perf_counter()
    net = build_network(cfg) if net is None else net
    _ = net.spectrum  # computed once, shipped to workers with the network
    idx = list(range(cfg.replications))
    if cfg.workers == 1:
        log = _run_chunk((net, cfg, idx))
    else:
        chunks = [idx[i :: cfg.workers] for i in range(cfg.workers)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = pool.map(_run_chunk, [(net, cfg, c) for c in chunks if c])
            log = sorted((rep for part in parts for rep in part), key=lambda rep: rep.index)
    ok = [rep for rep in log if rep.ok]
    if not ok:
        raise RuntimeError(f"all {len(log)} replications failed; first error: {log[0].error}")
    deltas = network_deltas(net, cfg.shift)
    actual = effects_from_vector(cfg.truth.to_vector(), deltas, cfg.shift, cfg.truth.p)
    est = np.array([rep.estimates for rep in ok])
    ses = np.array([rep.ses for rep in ok])
    table = MetricsTable(
        cfg.n_nodes,
        summarize(actual, est, ses),
        len(ok),
        len(log) - len(ok),
        np.mean([rep.params for rep in ok], axis=0),
    )
    return ExperimentResult(cfg, table, log, deltas.as_dict(), time.perf_counter() - t0)


def parameter_recovery(cfg: ExperimentConfig, net: Network | None = None) -> dict:
    """Mean fitted parameters against the truth, keyed by parameter name."""
    res = run_experiment(cfg, net)
    labels = ParamIndex(cfg.truth.p).names()
    truth = cfg.truth.to_vector()
    return {
        lab: {"truth": float(t), "mean": float(m), "error": float(m - t)}
        for lab, t, m in zip(labels, truth, res.table.mean_params)
    }


def reproduce_table(
    preset: str,
    scale: float = 1.0,
    sizes=DEFAULT_SIZES,
    seed: int = 0,
    workers: int = 1,
) -> list[ExperimentResult]:
    """Run a named simulation design at each network size.

    ``scale`` multiplies the reference count of 500 replications (rounded
    up, at least one).
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    if scale <= 0:
        raise ValueError("scale must be positive")
    spec = PRESETS[preset]
    reps = max(1, math.ceil(REFERENCE_REPLICATIONS * scale))
    out = []
    for n in sizes:
        cfg = ExperimentConfig(
            network=spec["network"],
            target_degree=spec.get("target_degree"),
            n_nodes=int(n),
            replications=reps,
            truth=design_truth(spec["truth"]),
            seed=seed,
            workers=workers,
        )
        out.append(run_experiment(cfg))
    return out


def _fmt(x) -> str:
    return "" if x is None else f"{x:.3f}"


def tables_to_csv(results: list[ExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for res in results:
        for row in res.table.rows:
            w.writerow(
                [res.table.n_nodes, row.name, _fmt(row.actual), _fmt(row.bias), _fmt(row.rrmse),
                 _fmt(row.ese), _fmt(row.ase), _fmt(row.coverage)]
            )
    return buf.getvalue()


def tables_metadata(results: list[ExperimentResult]) -> dict:
    return {"studies": [res.metadata() for res in results]}


__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "MetricsTable",
    "PRESETS",
    "build_network",
    "parameter_recovery",
    "replication_seed",
    "reproduce_table",
    "run_experiment",
    "summarize",
    "tables_metadata",
    "tables_to_csv",
]
