import math

import numpy as np
import pytest

import corrdecay as cd
from corrdecay.errors import InvalidSpec
from corrdecay.maps import (
    UEMapSpec,
    affine_branch,
    moebius_branch,
    spec_from_document,
    spec_to_document,
    tabulated_branch,
)


def test_doubling_validates(doubling):
    report = cd.validate_spec(doubling, 1000)
    assert report.passed, report.failures
    assert report.worst_distortion == 0.0  # affine branches have no distortion
    assert abs(report.mass_total - 1.0) < 1e-12


def test_overstated_lambda_fails(doubling):
    spec = UEMapSpec(branches=doubling.branches, lam=3.0, K=0.0, eta=1.0)
    report = cd.validate_spec(spec, 1000)
    assert not report.passed
    assert any("expansion" in f for f in report.failures)
    assert report.observed_expansion == pytest.approx(2.0, rel=1e-9)


def test_lsv_spec_validates(lsv):
    spec, tau, dist = lsv
    report = cd.validate_spec(spec, 500)
    assert report.passed, report.failures
    assert 0.0 < spec.truncation_mass < 0.01
    assert tau.min() == 1 and tau.max() == 64


def test_overlapping_cells_rejected():
    branches = (affine_branch([0.0, 0.6]), affine_branch([0.5, 1.0]))
    spec = UEMapSpec(branches=branches, lam=1.5, K=0.0, eta=1.0)
    with pytest.raises(InvalidSpec):
        cd.validate_spec(spec)


def test_non_monotone_branch_rejected():
    wiggle = cd.Branch(
        inverse_map=lambda y: 0.25 + 0.2 * np.sin(4.0 * np.pi * np.asarray(y)),
        log_weight=lambda y: np.full_like(np.asarray(y, dtype=float), math.log(0.5)),
        cell=(0.0, 0.5),
    )
    spec = UEMapSpec(branches=(wiggle, affine_branch([0.5, 1.0])), lam=2.0, K=0.0, eta=1.0)
    with pytest.raises(InvalidSpec):
        cd.validate_spec(spec)


def test_branch_preimages_doubling(doubling):
    pairs = cd.branch_preimages(doubling, 0.0)
    assert pairs == [(0.0, 0.5), (0.5, 0.5)]
    pairs = cd.branch_preimages(doubling, 1.0)
    assert pairs == [(0.5, 0.5), (1.0, 0.5)]


def test_branch_preimages_lsv(lsv):
    spec, _, _ = lsv
    pairs = cd.branch_preimages(spec, 0.75)
    assert len(pairs) == 64
    total = sum(w for _, w in pairs)
    assert all(w > 0.0 for _, w in pairs)
    # pointwise the weight sum is P_m 1, pinned to [e^-K, e^K]
    assert math.exp(-spec.K) <= total <= math.exp(spec.K)
    # in the mean it recovers the retained mass exactly
    quad = cd.midpoint_quadrature(
        lambda y: sum(np.exp(br.log_weight(y)) for br in spec.branches), 2**12
    )
    assert abs(quad - (1.0 - spec.truncation_mass)) < 1e-6


def test_truncation_error_bound(doubling):
    assert cd.truncation_error_bound(doubling, 5.0) == 0.0
    spec = UEMapSpec(branches=doubling.branches, lam=2.0, K=0.0, eta=1.0, truncation_mass=0.01)
    assert cd.truncation_error_bound(spec, 1.0) == pytest.approx(0.01)
    spec = UEMapSpec(branches=doubling.branches, lam=2.0, K=1.0, eta=1.0, truncation_mass=0.01)
    assert cd.truncation_error_bound(spec, 2.0) == pytest.approx(2.0 * math.e * 0.01)


def test_transfer_preserves_total_mass_quadrature(doubling, moebius):
    # integral of P_m 1 over Y equals 1 for finite partitions, to 1e-10
    for spec in (doubling, moebius):
        total = cd.midpoint_quadrature(
            lambda y: sum(np.exp(br.log_weight(y)) for br in spec.branches), 2**16
        )
        assert abs(total - 1.0) <= 1e-10


def test_weight_sum_window(moebius):
    # sum_a zeta(y_a) stays within [e^-K, e^K] for full-branch finite specs
    y = np.linspace(0.0, 1.0, 257)
    total = np.zeros_like(y)
    for br in moebius.branches:
        total += np.exp(br.log_weight(y))
    assert np.all(total <= math.exp(moebius.K) + 1e-12)
    assert np.all(total >= math.exp(-moebius.K) - 1e-12)


def test_forward_inverse_roundtrip(moebius):
    y = np.linspace(0.0, 1.0, 513)
    for br in moebius.branches:
        ya = br.inverse_map(y)
        assert np.max(np.abs(br.forward_map(ya) - y)) < 1e-12


def test_tabulated_branch_matches_closed_form():
    exact = moebius_branch([0.0, 0.5], 0.25)
    ys = np.linspace(0.0, 1.0, 257)
    tab = tabulated_branch([0.0, 0.5], ys, exact.inverse_map(ys))
    spec = UEMapSpec(
        branches=(tab, moebius_branch([0.5, 1.0], -0.2)), lam=1.6, K=0.51, eta=1.0
    )
    report = cd.validate_spec(spec, 500)
    assert report.passed, report.failures
    q = np.linspace(0.0, 1.0, 1025)
    assert np.max(np.abs(tab.inverse_map(q) - exact.inverse_map(q))) < 1e-8


def test_document_round_trip(doubling):
    doc = spec_to_document(doubling)
    rebuilt = spec_from_document(doc)
    assert rebuilt.lam == doubling.lam and rebuilt.K == doubling.K
    pairs = cd.branch_preimages(rebuilt, 0.25)
    assert pairs == cd.branch_preimages(doubling, 0.25)


def test_document_lsv_expansion():
    doc = {
        "lambda": 2.0,
        "K": 1.5,
        "eta": 1.0,
        "truncation_mass": 0.0,
        "branches": [{"kind": "lsv_induced", "alpha": 0.5, "n_branches": 8}],
    }
    spec = spec_from_document(doc)
    assert spec.n_branches == 8
    assert spec.truncation_mass > 0.0


def test_unknown_kind_rejected():
    doc = {"lambda": 2.0, "K": 0.0, "eta": 1.0, "branches": [{"kind": "mystery"}]}
    with pytest.raises(InvalidSpec):
        spec_from_document(doc)
