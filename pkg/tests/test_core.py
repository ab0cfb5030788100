"""Post-stratified estimation machinery: samples, totals, ratios, classes."""

import math

import numpy as np
import pytest

from timberline.core import (
    build_sample,
    make_classes,
    post_stratified_covariance,
    post_stratified_total,
    ratio_estimate,
    sampling_error_pct,
)
from timberline.errors import EstimationError
from timberline.model import (
    Evaluation,
    EstimationUnit,
    ForestDatabase,
    PlotRecord,
    Stratum,
    StratumAssignment,
)


def _db(weights, plot_strata, area=1000.0, adj=1.0):
    """One evaluation, one unit, strata with the given weights.

    ``plot_strata`` maps plot cn -> stratum index.
    """
    ev = Evaluation(evalid=1, statecd=9, eval_typ="VOL", report_year=2018,
                    start_invyr=2018, end_invyr=2018)
    unit = EstimationUnit(cn="U1", evalid=1, area_used=area)
    strata = [
        Stratum(cn=f"S{i}", estn_unit_cn="U1", weight=w,
                adj_subp=adj, adj_micr=adj, adj_macr=adj)
        for i, w in enumerate(weights)
    ]
    plots = [
        PlotRecord(cn=cn, statecd=9, plot=i, invyr=2018, lat=41.0, lon=-72.0,
                   remper=None, plot_status_cd=1, designcd=1)
        for i, cn in enumerate(plot_strata)
    ]
    assigns = [
        StratumAssignment(plt_cn=cn, stratum_cn=f"S{k}", invyr=2018)
        for cn, k in plot_strata.items()
    ]
    return ForestDatabase(
        plots=plots, conds=[], trees=[], seedlings=[], dwm=[], invasives=[],
        evaluations=[ev], estn_units=[unit], strata=strata, assignments=assigns,
        species=[], states=("CT",),
    )


def _sample(weights, plot_strata, **kw):
    db = _db(weights, plot_strata, **kw)
    return build_sample(db, db.evaluations)


# -- build_sample ----------------------------------------------------------


def test_sample_counts_and_order():
    s = _sample([0.6, 0.4], {"P3": 0, "P1": 0, "P2": 1})
    assert s.n_plots == 3
    # plots held in global cn order; strata ordered by cn within the unit
    assert [p.cn for p in s.plots] == ["P1", "P2", "P3"]
    unit = s.units[0]
    assert [st.cn for st, _ in unit.strata] == ["S0", "S1"]
    assert [list(idx) for _, idx in unit.strata] == [[0, 2], [1]]


def test_assignment_to_unknown_stratum_dropped_and_reported():
    # the index cannot route such an assignment to any evaluation; it is
    # invisible to sampling and surfaces through validate_integrity instead
    db = _db([1.0], {"P1": 0})
    assigns = [StratumAssignment(plt_cn="P1", stratum_cn="S9", invyr=2018)]
    bad = ForestDatabase(
        plots=db.plots, conds=[], trees=[], seedlings=[], dwm=[], invasives=[],
        evaluations=db.evaluations, estn_units=db.estn_units, strata=db.strata,
        assignments=assigns, species=[], states=("CT",),
    )
    sample = build_sample(bad, bad.evaluations)
    assert sample.n_plots == 0
    from timberline.model import validate_integrity

    assert any(v.rule == "assignment->stratum" for v in validate_integrity(bad))


def test_assignment_to_missing_plot_raises():
    db = _db([1.0], {"P1": 0})
    assigns = list(db.assignments) + [
        StratumAssignment(plt_cn="GHOST", stratum_cn="S0", invyr=2018)
    ]
    bad = ForestDatabase(
        plots=db.plots, conds=[], trees=[], seedlings=[], dwm=[], invasives=[],
        evaluations=db.evaluations, estn_units=db.estn_units, strata=db.strata,
        assignments=assigns, species=[], states=("CT",),
    )
    with pytest.raises(EstimationError, match="GHOST"):
        build_sample(bad, bad.evaluations)


def test_sample_duplicate_assignment_keeps_last():
    db = _db([0.5, 0.5], {"P1": 0})
    assigns = [
        StratumAssignment(plt_cn="P1", stratum_cn="S0", invyr=2018),
        StratumAssignment(plt_cn="P1", stratum_cn="S1", invyr=2018),
    ]
    redone = ForestDatabase(
        plots=db.plots, conds=[], trees=[], seedlings=[], dwm=[], invasives=[],
        evaluations=db.evaluations, estn_units=db.estn_units, strata=db.strata,
        assignments=assigns, species=[], states=("CT",),
    )
    s = build_sample(redone, redone.evaluations)
    assert s.n_plots == 1
    assert s.stratum_of["P1"].cn == "S1"


# -- post_stratified_total -------------------------------------------------


def test_single_stratum_total_is_classic_srs():
    # values 12, 6, 0, 6 over A = 1000: mean 6, s^2 = 24
    s = _sample([1.0], {"P1": 0, "P2": 0, "P3": 0, "P4": 0})
    est = post_stratified_total(np.array([12.0, 6.0, 0.0, 6.0]), s)
    assert est.total == pytest.approx(6000.0)
    assert est.variance == pytest.approx(1000.0**2 * 24.0 / 4.0)
    assert est.n_nonzero == 3
    assert est.n_plots == 4


def test_two_strata_total_hand_value():
    # stratum A (w .6): plots 10, 20 -> mean 15, s2 50
    # stratum B (w .4): plots 0, 40 -> mean 20, s2 800
    # Yhat = 1000 * (.6*15 + .4*20) = 17000
    s = _sample([0.6, 0.4], {"P1": 0, "P2": 0, "P3": 1, "P4": 1})
    est = post_stratified_total(np.array([10.0, 20.0, 0.0, 40.0]), s)
    assert est.total == pytest.approx(17000.0)
    # v = (A^2/n) * sum_h (n_h/n) s2_h (w_h + (1-w_h)/n)
    acc = (2 / 4) * 50.0 * (0.6 + 0.4 / 4) + (2 / 4) * 800.0 * (0.4 + 0.6 / 4)
    assert est.variance == pytest.approx(1000.0**2 / 4.0 * acc)


def test_singleton_stratum_contributes_zero_variance():
    s = _sample([0.7, 0.3], {"P1": 0, "P2": 0, "P3": 1})
    est = post_stratified_total(np.array([10.0, 20.0, 99.0]), s)
    acc = (2 / 3) * 50.0 * (0.7 + 0.3 / 3)  # singleton stratum adds nothing
    assert est.variance == pytest.approx(1000.0**2 / 3.0 * acc)


def test_missing_stratum_weight_raises_at_estimation():
    s = _sample([None], {"P1": 0, "P2": 0})
    with pytest.raises(EstimationError, match="STRATUM_WGT"):
        post_stratified_total(np.array([1.0, 2.0]), s)


def test_covariance_matches_variance_on_identical_series():
    s = _sample([0.6, 0.4], {"P1": 0, "P2": 0, "P3": 1, "P4": 1})
    x = np.array([10.0, 20.0, 0.0, 40.0])
    est = post_stratified_total(x, s)
    cov = post_stratified_covariance(x, x, s)
    assert cov == pytest.approx(est.variance)


def test_covariance_sign_tracks_association():
    s = _sample([1.0], {"P1": 0, "P2": 0, "P3": 0})
    x = np.array([1.0, 2.0, 3.0])
    up = np.array([2.0, 4.0, 6.0])
    down = np.array([6.0, 4.0, 2.0])
    assert post_stratified_covariance(x, up, s) > 0
    assert post_stratified_covariance(x, down, s) < 0


# -- ratio_estimate --------------------------------------------------------


def _tot(total, variance, nnz=2, n=4):
    from timberline.core import TotalEstimate

    return TotalEstimate(total=total, variance=variance, n_nonzero=nnz, n_plots=n)


def test_ratio_point_and_variance():
    num = _tot(6000.0, 6.0e6)
    den = _tot(1000.0, 0.0)
    r, v = ratio_estimate(num, den, 0.0)
    assert r == pytest.approx(6.0)
    # var formula: (v_num - 2 r cov + r^2 v_den) / den_total^2
    assert v == pytest.approx(6.0)


def test_ratio_zero_denominator_is_undefined():
    r, v = ratio_estimate(_tot(5.0, 1.0), _tot(0.0, 0.0), 0.0)
    assert r is None and v is None


def test_ratio_variance_negative_within_rounding_clamps_to_zero():
    num = _tot(10.0, 4.0)
    den = _tot(10.0, 4.0)
    # cov barely above the consistent value: raw = 4 - 2*4.000000000001 + 4 < 0
    r, v = ratio_estimate(num, den, 4.0 + 1e-12)
    assert r == pytest.approx(1.0)
    assert v == 0.0


def test_ratio_variance_truly_negative_raises():
    with pytest.raises(EstimationError):
        ratio_estimate(_tot(10.0, 4.0), _tot(10.0, 4.0), 40.0)


# -- sampling_error_pct ----------------------------------------------------


def test_sampling_error_basic():
    assert sampling_error_pct(6.0, 6.0, 3) == pytest.approx(100 * math.sqrt(6) / 6)


def test_sampling_error_undefined_cases():
    assert sampling_error_pct(None, 1.0, 5) is None
    assert sampling_error_pct(5.0, None, 5) is None
    assert sampling_error_pct(5.0, 1.0, 1) is None  # one nonzero plot
    assert sampling_error_pct(0.0, 1.0, 5) is None  # zero estimate
    assert sampling_error_pct(5.0, 0.0, 5) == 0.0


# -- make_classes ----------------------------------------------------------


def test_size_class_labels():
    assert make_classes(1.0) == "[1, 3)"
    assert make_classes(2.9) == "[1, 3)"
    assert make_classes(3.0) == "[3, 5)"
    assert make_classes(10.4) == "[9, 11)"
    assert make_classes(None) is None


def test_size_class_below_lower_bound():
    assert make_classes(0.2) == "< 1"


def test_size_class_custom_width_and_origin():
    assert make_classes(12.0, width=5.0, lower=0.0) == "[10, 15)"
    assert make_classes(4.9, width=5.0, lower=0.0) == "[0, 5)"
    assert make_classes(1.6, width=0.5, lower=0.25) == "[1.25, 1.75)"
