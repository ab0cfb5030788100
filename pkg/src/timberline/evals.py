"""Finding evaluations and clipping a database down to them.

An *evaluation* names a complete, internally consistent sample: a set of
plots, their stratification, and the acreage it expands to.  Everything else
in the package estimates within evaluations, so the usual first step is to
pick the ones you mean — most recent per state, a specific report year, or
explicit ids — and drop the rest of the data.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EstimationError, UsageError
from .model import Evaluation, ForestDatabase
from .spatial import PolygonSet, assign_plots

__all__ = ["ClipOptions", "find_evaluations", "clip"]


def find_evaluations(
    db: ForestDatabase,
    year: int | None = None,
    eval_type: str | None = None,
) -> list[int]:
    """Evaluation ids matching a report year and/or type, sorted ascending."""
    out = []
    for ev in db.evaluations:
        if year is not None and ev.report_year != year:
            continue
        if eval_type is not None:
            typ = ev.eval_typ if ev.eval_typ is not None else "VOL"
            if typ != eval_type.upper():
                continue
        out.append(ev.evalid)
    return sorted(out)


@dataclass(frozen=True)
class ClipOptions:
    """How to subset a database.

    At most one of ``most_recent``, ``evalids``, ``year`` may be active.
    ``match_eval`` keeps only report years common to every state in the
    database (it composes with ``most_recent``).  ``mask`` keeps plots whose
    center point falls inside any polygon; stratification tables stay intact,
    so estimates over a masked database still expand to the full estimation
    unit acreage.
    """

    most_recent: bool = False
    match_eval: bool = False
    evalids: tuple[int, ...] = ()
    mask: object | None = None
    year: int | None = None


def _validated(options: ClipOptions) -> ClipOptions:
    active = []
    if options.most_recent:
        active.append("mostRecent")
    if options.evalids:
        active.append("evalids")
    if options.year is not None:
        active.append("year")
    if len(active) > 1:
        raise UsageError(
            [f"choose at most one of mostRecent/evalids/year, got {', '.join(active)}"]
        )
    return options


def _mask_polygons(mask) -> PolygonSet:
    if isinstance(mask, PolygonSet):
        return mask
    return PolygonSet.from_geojson(mask)


def _select_evaluations(db: ForestDatabase, options: ClipOptions) -> list[Evaluation]:
    chosen = list(db.evaluations)
    if options.evalids:
        known = {ev.evalid: ev for ev in db.evaluations}
        missing = [e for e in options.evalids if e not in known]
        if missing:
            have = ", ".join(str(k) for k in sorted(known)) or "none"
            raise EstimationError(
                f"unknown evalid(s) {', '.join(str(m) for m in missing)}; "
                f"database has {have}"
            )
        chosen = [known[e] for e in options.evalids]
    if options.year is not None:
        chosen = [ev for ev in chosen if ev.report_year == options.year]
    if options.match_eval:
        by_state: dict[int | None, set[int | None]] = {}
        for ev in chosen:
            by_state.setdefault(ev.statecd, set()).add(ev.report_year)
        if by_state:
            common = set.intersection(*by_state.values())
            chosen = [ev for ev in chosen if ev.report_year in common]
    if options.most_recent:
        latest: dict[int | None, int] = {}
        for ev in chosen:
            y = ev.report_year if ev.report_year is not None else -1
            st = ev.statecd
            if st not in latest or y > latest[st]:
                latest[st] = y
        chosen = [
            ev
            for ev in chosen
            if (ev.report_year if ev.report_year is not None else -1) == latest[ev.statecd]
        ]
    return chosen


def clip(db: ForestDatabase, options: ClipOptions | None = None, **kw) -> ForestDatabase:
    """A new database holding only what the selected evaluations need.

    Every output row exists in the input; nothing is fabricated or rescaled.
    With a mask, plots outside the polygons (or without coordinates) drop
    out along with their trees and assignments, while the population tables
    keep their full stratum weights and unit areas.
    """
    if options is None:
        options = ClipOptions(**kw)
    elif kw:
        raise UsageError(["pass ClipOptions or keyword options, not both"])
    options = _validated(options)

    chosen = _select_evaluations(db, options)
    keep_evals = {ev.evalid for ev in chosen}

    units = [u for u in db.estn_units if u.evalid in keep_evals]
    unit_cns = {u.cn for u in units}
    strata = [s for s in db.strata if s.estn_unit_cn in unit_cns]
    stratum_cns = {s.cn for s in strata}

    assigned_plots: set[str] = set()
    assignments = []
    for a in db.assignments:
        if a.stratum_cn in stratum_cns:
            assignments.append(a)
            assigned_plots.add(a.plt_cn)

    keep_plots = {cn for cn in assigned_plots if cn in db.plot_by_cn}
    if options.mask is not None:
        polys = _mask_polygons(options.mask)
        inside = set(assign_plots(db.plots, polys))
        keep_plots &= inside
        assignments = [a for a in assignments if a.plt_cn in keep_plots]

    plots = [p for p in db.plots if p.cn in keep_plots]
    conds = [c for c in db.conds if c.plt_cn in keep_plots]
    trees = [t for t in db.trees if t.plt_cn in keep_plots]
    seedlings = [s for s in db.seedlings if s.plt_cn in keep_plots]
    dwm = [d for d in db.dwm if d.plt_cn in keep_plots]
    invasives = [i for i in db.invasives if i.plt_cn in keep_plots]

    return ForestDatabase(
        plots=plots,
        conds=conds,
        trees=trees,
        seedlings=seedlings,
        dwm=dwm,
        invasives=invasives,
        evaluations=chosen,
        estn_units=units,
        strata=strata,
        assignments=assignments,
        species=db.species,
        states=db.states,
    )
