import numpy as np
import pytest

from rensem.experiments import ExperimentConfig, run_experiment
from rensem.fit import fit_mle
from rensem.graph import gen_erdos_renyi, gen_ring
from rensem.io import write_dataset
from rensem.model import ConfounderSpec, Dataset, RenSemParams, design_truth, simulate_dataset

_ACCEPTANCE: list[str] = []


def record_acceptance(label: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    _ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ring100():
    return gen_ring(100)


@pytest.fixture(scope="session")
def ring_data(ring100):
    return simulate_dataset(ring100, design_truth("network1"), seed=7)


@pytest.fixture(scope="session")
def ring_fit(ring_data):
    return fit_mle(ring_data)


@pytest.fixture(scope="session")
def er150():
    return gen_erdos_renyi(150, 6.0, seed=11)


@pytest.fixture(scope="session")
def er_data(er150):
    return simulate_dataset(er150, design_truth("network2"), seed=12)


@pytest.fixture(scope="session")
def er_fit(er_data):
    return fit_mle(er_data)


_STUDIES: dict = {}


@pytest.fixture(scope="session")
def study():
    """Memoised Monte-Carlo runs shared between test modules."""

    def get(network: str, n_nodes: int, replications: int, seed: int = 0):
        key = (network, n_nodes, replications, seed)
        if key not in _STUDIES:
            if network == "ring":
                cfg = ExperimentConfig(network="ring", n_nodes=n_nodes, replications=replications,
                                       truth=design_truth("network1"), seed=seed)
            else:
                cfg = ExperimentConfig(network="erdos-renyi", target_degree=10.0, n_nodes=n_nodes,
                                       replications=replications, truth=design_truth("network2"), seed=seed)
            _STUDIES[key] = run_experiment(cfg)
        return _STUDIES[key]

    return get


# Gamer-network shaped data: 1,415 accounts, mean degree near 67, about half
# exposed, lifetime (days) and view counts on realistic scales, and a
# negative direct effect of the exposure on views.
GAMER_N = 1415
GAMER_DEGREE = 67.0
GAMER_PARAMS = RenSemParams(
    beta=[0.0, -0.25, 0.05, 0.35, 0.05, 0.2, 0.05],
    gamma=[0.0, 0.3, 0.05, 0.25, 0.05],
    alpha=[0.0, 0.3],
    var_y=0.5,
    var_by=0.002,
    var_m=0.6,
    var_bm=0.002,
)


def make_gamer_dataset(seed: int = 2024) -> Dataset:
    net = gen_erdos_renyi(GAMER_N, GAMER_DEGREE, seed=seed)
    raw = simulate_dataset(net, GAMER_PARAMS, ConfounderSpec(p=1), seed=seed + 1)
    z = lambda v: (v - v.mean()) / v.std()  # noqa: E731
    lifetime = 2035.0 + 730.0 * z(raw.m)
    views = 573003.0 + 227498.0 * z(raw.y)
    age = 30.0 + 8.0 * z(raw.c[:, 0])
    ids = (np.arange(GAMER_N) * 7 + 1000).tolist()
    return Dataset(net, raw.a, lifetime, views, age[:, None], {"ids": ids, "confounder_names": ["c1"]})


@pytest.fixture(scope="session")
def gamer_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("gamer")
    return write_dataset(d, make_gamer_dataset())
