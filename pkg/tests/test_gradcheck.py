import re

import numpy as np
import pytest

import sopool.autograd as ag
from sopool.gradcheck import ALL_CHECKS, MODEL_CHECKS, OP_CHECKS, TOLERANCE, run_suite


@pytest.fixture(scope="module")
def full_suite():
    return run_suite(seeds=50)


def test_every_tape_op_has_a_check():
    source = open(ag.__file__).read()
    recorded = set(re.findall(r'_make\([^"]*?"([a-z_]+)"', source, re.S))
    assert recorded
    assert recorded <= set(OP_CHECKS)


def test_both_model_builders_checked():
    assert set(MODEL_CHECKS) == {"flat_model", "hierarchical_model"}


def test_full_suite_passes_within_two_minutes(full_suite):
    assert full_suite.passed, full_suite.summary()
    assert full_suite.elapsed < 120
    assert len(full_suite.checks) == 50 * len(ALL_CHECKS)
    assert {seed for _, seed, _ in full_suite.checks} == set(range(50))


def test_suite_probes_and_rarely_skips(full_suite):
    probed = sum(c.probed for _, _, c in full_suite.checks)
    skipped = sum(c.skipped for _, _, c in full_suite.checks)
    assert probed > 10_000
    assert skipped < 0.01 * probed


def test_summary_names_worst_offender(full_suite):
    name, seed, chk = full_suite.worst
    text = full_suite.summary()
    assert f"worst: {chk.name} (seed {seed})" in text
    assert text.rstrip().endswith(f"PASS (tol {TOLERANCE:g})")


@pytest.mark.parametrize("op", ["matmul", "segment_cross", "batch_norm", "csr_max", "segment_softmax"])
def test_injected_fault_is_caught(op):
    with ag.inject_fault(op):
        result = run_suite(seeds=2, names=[op])
    assert not result.passed
    assert result.worst[0] == op
    assert f"{op}" in result.summary() and "FAIL" in result.summary()


def test_fault_injection_is_scoped():
    with ag.inject_fault("matmul"):
        pass
    assert run_suite(seeds=2, names=["matmul"]).passed


def test_selected_seed_range():
    result = run_suite(seeds=3, names=["relu"], first_seed=10)
    assert [seed for _, seed, _ in result.checks] == [10, 11, 12]


def test_suite_is_deterministic():
    a = run_suite(seeds=3, names=["sopool_bimap", "flat_model"])
    b = run_suite(seeds=3, names=["sopool_bimap", "flat_model"])
    assert [c.rel_err for _, _, c in a.checks] == [c.rel_err for _, _, c in b.checks]


def test_model_checks_report_finite_errors():
    for seed in range(3):
        for name, check in MODEL_CHECKS.items():
            chk = check(seed)
            assert np.isfinite(chk.rel_err) and chk.rel_err < TOLERANCE, (name, seed, chk)
