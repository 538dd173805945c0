"""Collision search for graph poolings.

A pooling *collides* on two node-representation multisets when their pooled
outputs agree to within ``tol`` (max-abs distance). Trainable pooling
parameters are drawn from a seeded generator and shared by both inputs, so
every report is replayable from its seed.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from sopool import pooling as pl
from sopool.errors import BudgetError, ConfigError, ShapeError

MAX_MULTISET_SIZE = 6
DEFAULT_BUDGET = 2_000_000
REPORT_COLUMNS = ("pooling", "left", "right", "distance", "verdict", "tol", "seed")


@dataclass
class CollisionReport:
    pooling: str
    left: str
    right: str
    distance: float
    tol: float
    seed: int
    verdict: str = field(init=False)

    def __post_init__(self):
        self.verdict = "collision" if self.distance < self.tol else "distinguished"

    @property
    def collides(self) -> bool:
        return self.verdict == "collision"

    def row(self) -> tuple:
        return (self.pooling, self.left, self.right, f"{self.distance:.6g}", self.verdict, f"{self.tol:g}", self.seed)


class PoolingProbe:
    """One pooling kind with fixed seeded parameters, mapping ``H`` to a flat vector.

    ``sopool`` and ``covpool`` use the raw f x f forms; ``sopool_bimap`` draws
    a square ``W`` unless ``f_prime`` is given.
    """

    def __init__(self, kind: str, f: int, seed: int = 0, f_prime: int | None = None, k: int = 2):
        self.kind = pl.canonical_kind(kind)
        self.f = f
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.module = pl.GlobalPooling(self.kind if self.kind != "covpool" else "sum", f, rng, f_prime or f, k)

    def params(self) -> dict:
        return {p.name: p.value.copy() for p in self.module.parameters()}

    def __call__(self, H) -> np.ndarray:
        H = np.atleast_2d(np.asarray(H, dtype=np.float64))
        if H.shape[1] != self.f:
            raise ShapeError(f"{self.kind}: expected {self.f} feature columns, got {H.shape[1]}")
        if self.kind == "covpool":
            return pl.covpool_flat(H).value.ravel()
        return self.module(H).value.ravel()


def _describe(H) -> str:
    rows = np.atleast_2d(np.asarray(H, dtype=np.float64))
    return "{" + ", ".join("[" + ",".join(f"{x:g}" for x in r) + "]" for r in rows) + "}"


def check_pair(H1, H2, pooling: str, params: PoolingProbe | None = None, seed: int = 0, tol: float = 1e-9,
               names: tuple[str, str] | None = None) -> CollisionReport:
    """Pool both multisets with the same parameters and compare."""
    H1 = np.atleast_2d(np.asarray(H1, dtype=np.float64))
    H2 = np.atleast_2d(np.asarray(H2, dtype=np.float64))
    if H1.shape[1] != H2.shape[1]:
        raise ShapeError(f"feature widths differ: {H1.shape[1]} vs {H2.shape[1]}")
    probe = params if params is not None else PoolingProbe(pooling, H1.shape[1], seed)
    d = float(np.max(np.abs(probe(H1) - probe(H2))))
    left, right = names if names else (_describe(H1), _describe(H2))
    return CollisionReport(probe.kind, left, right, d, tol, probe.seed)


# ------------------------------------------------------------------ fixtures


@dataclass(frozen=True)
class Fixture:
    name: str
    left: str
    right: str
    H1: np.ndarray
    H2: np.ndarray
    expected: dict
    note: str = ""


def counterexample_fixtures() -> list[Fixture]:
    """Shipped counterexamples.

    ``repeat``: one node ``v`` against two copies of ``v`` (v = [3, 1]).
    Centering and softmax normalisation both discard the node count.

    ``doubled-pair``: ``{a, b}`` against ``{a, a, b, b}``. Doubling every node
    leaves the softmax-weighted mean unchanged while second-order statistics
    double. This one is our own construction of the same failure class.
    """
    v = np.array([[3.0, 1.0]])
    a, b = [2.0, -1.0], [0.5, 1.5]
    return [
        Fixture(
            "repeat", "{v}", "{v,v}", v, np.vstack([v, v]),
            {"covpool": "collision", "attnpool": "collision", "avg": "collision",
             "sopool": "distinguished", "sopool_attn": "distinguished", "sum": "distinguished"},
        ),
        Fixture(
            "doubled-pair", "{a,b}", "{a,a,b,b}", np.array([a, b]), np.array([a, a, b, b]),
            {"attnpool": "collision", "avg": "collision", "sopool": "distinguished",
             "sopool_attn": "distinguished", "covpool": "distinguished", "sum": "distinguished"},
            note="our construction",
        ),
    ]


@dataclass
class FixtureOutcome:
    fixture: str
    report: CollisionReport
    expected: str

    @property
    def ok(self) -> bool:
        return self.report.verdict == self.expected


def run_counterexamples(seed: int = 0, tol: float = 1e-9) -> list[FixtureOutcome]:
    outcomes = []
    for fx in counterexample_fixtures():
        for kind, expected in fx.expected.items():
            rep = check_pair(fx.H1, fx.H2, kind, seed=seed, tol=tol, names=(fx.left, fx.right))
            outcomes.append(FixtureOutcome(fx.name, rep, expected))
    return outcomes


def format_counterexamples(outcomes) -> str:
    lines = [f"{'fixture':<13} {'pooling':<12} {'pair':<18} {'distance':>10}  {'verdict':<13} expected"]
    for o in outcomes:
        r = o.report
        mark = "ok" if o.ok else "MISMATCH"
        lines.append(f"{o.fixture:<13} {r.pooling:<12} {r.left + ' ' + r.right:<18} {r.distance:>10.4g}  "
                     f"{r.verdict:<13} {o.expected} {mark}")
    return "\n".join(lines)


# --------------------------------------------------------------------- sweep


def count_multisets(alphabet_size: int, max_n: int) -> int:
    return sum(math.comb(alphabet_size + n - 1, n) for n in range(1, max_n + 1))


def _letters(i: int) -> str:
    s = ""
    i += 1
    while i:
        i, r = divmod(i - 1, 26)
        s = chr(ord("a") + r) + s
    return s


def sweep_multisets(f: int, max_n: int, alphabet=None, poolings=None, seed: int = 0, tol: float = 1e-9,
                    budget: int = DEFAULT_BUDGET) -> list[CollisionReport]:
    """Every colliding pair of distinct multisets of size 1..``max_n`` over ``alphabet``.

    ``alphabet`` defaults to the ``f`` standard basis vectors; its entries
    are named a, b, c, ... in the descriptors. Results are ordered by pooling
    then by enumeration order of the pair.
    """
    if max_n < 1:
        raise ConfigError(f"max-n must be at least 1, got {max_n}")
    if max_n > MAX_MULTISET_SIZE:
        raise BudgetError(f"max-n {max_n} exceeds the enumeration guard of {MAX_MULTISET_SIZE}")
    alphabet = np.eye(f) if alphabet is None else np.atleast_2d(np.asarray(alphabet, dtype=np.float64))
    if alphabet.shape[1] != f:
        raise ShapeError(f"alphabet vectors have length {alphabet.shape[1]}, expected {f}")
    if alphabet.shape[0] < 1:
        raise ConfigError("alphabet is empty")
    poolings = [pl.canonical_kind(p) for p in (poolings or pl.KINDS)]
    m = count_multisets(alphabet.shape[0], max_n)
    comparisons = m * (m - 1) // 2 * len(poolings)
    if comparisons > budget:
        raise BudgetError(
            f"sweep needs {comparisons} comparisons ({m} multisets, {len(poolings)} poolings); budget is {budget}"
        )
    multisets = [ms for n in range(1, max_n + 1)
                 for ms in combinations_with_replacement(range(alphabet.shape[0]), n)]
    names = ["{" + ",".join(_letters(i) for i in ms) + "}" for ms in multisets]
    reports = []
    for kind in poolings:
        probe = PoolingProbe(kind, f, seed)
        out = np.stack([probe(alphabet[list(ms)]) for ms in multisets])
        for i in range(len(multisets) - 1):
            dist = np.abs(out[i + 1 :] - out[i]).max(axis=1)
            for j in np.flatnonzero(dist < tol):
                reports.append(CollisionReport(kind, names[i], names[i + 1 + j], float(dist[j]), tol, seed))
    return reports


def reports_to_csv(reports, fh=None) -> str:
    buf = fh if fh is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue() if fh is None else ""


def summarize_sweep(reports, poolings) -> str:
    counts = {pl.canonical_kind(p): 0 for p in poolings}
    for r in reports:
        counts[r.pooling] += 1
    return "\n".join(f"{k:<13} {v} collisions" for k, v in counts.items())
