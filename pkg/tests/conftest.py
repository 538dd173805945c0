import os
from pathlib import Path

import numpy as np
import pytest

from sopool.graphdata import Dataset, Graph, build_features, parse_tu_dataset


# filled by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_graph(rng, n, p=0.4, d=3, label=0):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return Graph(n, edges, rng.uniform(-1, 1, size=(n, d)), label)


def random_permutation_matrix(rng, n):
    return np.eye(n)[rng.permutation(n)]


def size_separable_dataset(count=20, seed=0):
    """Small graphs (3-5 nodes, class 0) vs large graphs (12-15 nodes, class 1).

    Each graph is a path plus random chords; node features are degree one-hots.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(count):
        label = i % 2
        n = int(rng.integers(3, 6)) if label == 0 else int(rng.integers(12, 16))
        path = [(j, j + 1) for j in range(n - 1)]
        extra = [(a, b) for a in range(n) for b in range(a + 2, n) if rng.random() < 0.2]
        graphs.append(Graph(n, np.array(path + extra), np.zeros((n, 0)), label))
    raw = Dataset("SIZES", graphs, 2, 0, "none", [0, 1])
    return build_features(raw, "degree-onehot")


def mutag_root():
    """Folder containing MUTAG/ (or the MUTAG files), or None when absent."""
    candidates = [os.environ.get("SOPOOL_DATA_DIR"), Path(__file__).parent / "data", Path.home() / "data"]
    for c in candidates:
        if not c:
            continue
        c = Path(c)
        if (c / "MUTAG" / "MUTAG_A.txt").is_file() or (c / "MUTAG_A.txt").is_file():
            return c
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mutag():
    root = mutag_root()
    if root is None:
        pytest.skip("MUTAG not found (set SOPOOL_DATA_DIR to a folder with MUTAG/MUTAG_A.txt ...)")
    return parse_tu_dataset(root, "MUTAG")
