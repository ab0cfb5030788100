"""Evaluation selection and database clipping."""

import pytest

from timberline.errors import EstimationError, UsageError
from timberline.evals import ClipOptions, clip, find_evaluations
from timberline.synth import build_fixture, random_database


def test_find_evaluations_all_sorted():
    db = random_database(0)
    ids = find_evaluations(db)
    assert ids == sorted(ids)
    assert len(ids) == len(db.evaluations)


def test_find_evaluations_filters_by_year_and_type(synth_grm):
    assert find_evaluations(synth_grm, year=2018) == [91862]
    assert find_evaluations(synth_grm, year=1999) == []
    assert find_evaluations(synth_grm, eval_type="GRM") == [91862]
    assert find_evaluations(synth_grm, eval_type="vol") == []


def test_clip_by_evalid_keeps_only_referenced_rows():
    db = random_database(1)
    first = find_evaluations(db)[0]
    out = clip(db, evalids=(first,))
    assert [e.evalid for e in out.evaluations] == [first]
    plot_cns = {p.cn for p in out.plots}
    assert all(t.plt_cn in plot_cns for t in out.trees)
    assert all(a.plt_cn in plot_cns for a in out.assignments)
    # strata all reachable from kept units
    unit_cns = {u.cn for u in out.estn_units}
    assert all(s.estn_unit_cn in unit_cns for s in out.strata)


def test_clip_unknown_evalid_lists_known():
    db = build_fixture("SYNTH-1")
    with pytest.raises(EstimationError, match="91801"):
        clip(db, evalids=(424242,))


def test_clip_most_recent_picks_latest_per_state():
    db = random_database(2)
    out = clip(db, most_recent=True)
    years = {(e.statecd, e.report_year) for e in out.evaluations}
    for st in {e.statecd for e in db.evaluations}:
        all_years = [e.report_year for e in db.evaluations if e.statecd == st]
        assert (st, max(all_years)) in years


def test_clip_rejects_conflicting_selectors():
    db = build_fixture("SYNTH-1")
    with pytest.raises(UsageError, match="at most one"):
        clip(db, most_recent=True, evalids=(91801,))


def test_clip_options_and_keywords_are_exclusive():
    db = build_fixture("SYNTH-1")
    with pytest.raises(UsageError):
        clip(db, ClipOptions(most_recent=True), year=2018)


def test_clip_unfiltered_is_identity_copy(synth1):
    out = clip(synth1)
    assert out.same_contents(synth1)


def test_clip_mask_drops_outside_plots_keeps_population(synth1):
    # SYNTH-1 longitudes: P1 -73.00, P2 -72.90, P3 -72.60, P4 -72.50
    box = {
        "type": "FeatureCollection",
        "features": [{
            "type": "Feature",
            "properties": {"id": "west"},
            "geometry": {
                "type": "Polygon",
                "coordinates": [[[-73.05, 41.0], [-72.75, 41.0],
                                 [-72.75, 42.0], [-73.05, 42.0],
                                 [-73.05, 41.0]]],
            },
        }],
    }
    out = clip(synth1, mask=box)
    assert {p.cn for p in out.plots} == {"P1", "P2"}
    assert {a.plt_cn for a in out.assignments} == {"P1", "P2"}
    # population tables intact: expansion still uses the full unit area
    assert len(out.strata) == len(synth1.strata)
    assert out.estn_units[0].area_used == 1000.0


def test_clip_estimates_still_run_after_mask(synth1):
    import timberline as tl

    box = {
        "type": "FeatureCollection",
        "features": [{
            "type": "Feature",
            "properties": {"id": "east"},
            "geometry": {
                "type": "Polygon",
                "coordinates": [[[-72.75, 41.0], [-72.0, 41.0],
                                 [-72.0, 42.0], [-72.75, 42.0],
                                 [-72.75, 41.0]]],
            },
        }],
    }
    out = clip(synth1, mask=box)  # P3 (no trees) and P4 (one 6.0-tpa tree)
    table = tl.tpa(out)
    # plot means 0 and 6 over the full 1000-acre unit
    assert table.rows[0]["TPA"] == pytest.approx(3.0)
