"""Tests for core/gradcheck.py — loss completa contra diferenças finitas."""

from __future__ import annotations

import numpy as np
import pytest

from core.gradcheck import run_gradcheck, tiny_case


def test_tiny_case_is_deterministic():
    a, b = tiny_case(3), tiny_case(3)
    for pa, pb in zip(a.model.all_parameters(), b.model.all_parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)
    assert [v.instances for v in a.videos] == [v.instances for v in b.videos]
    assert len(a.videos) == 2


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_full_enumeration_passes(seed):
    reports = run_gradcheck(seed)
    params = tiny_case(seed).model.parameters()
    assert [r.parameter for r in reports] == [p.name for p in params]
    bad = [r for r in reports if not r.passed()]
    assert bad == []
    for report, param in zip(reports, params):
        assert report.entries == param.data.size


def test_encoder_receives_gradient_from_every_term():
    reports = {r.parameter: r for r in run_gradcheck(0, max_entries=6)}
    encoder = [r for name, r in reports.items() if name.startswith(("encoder.", "pyramid."))]
    assert encoder
    assert all(r.passed() for r in encoder), [r for r in encoder if not r.passed()]


def test_gradcheck_without_contrastive_term():
    reports = run_gradcheck(5, max_entries=8, lam=0.0)
    assert all(r.passed() for r in reports)


def test_sampled_entries_are_bounded():
    reports = run_gradcheck(1, max_entries=5)
    assert all(r.entries <= 5 for r in reports)
    assert all(r.passed() for r in reports)


def test_sensitivity_parameters_are_checked():
    names = {r.parameter for r in run_gradcheck(6, max_entries=4)}
    assert {"sensitivity.mu_cls", "sensitivity.sigma_eot"} <= names
    assert any(n.startswith("evaluator.") for n in names)
