"""CSV round-tripping, load diagnostics, and mirror downloads."""

import dataclasses

import pytest

from timberline.errors import FetchError, LoadError
from timberline.io import DEFAULT_BASE_URL, fetch_state, load_database, write_database
from timberline.synth import build_fixture


@pytest.mark.parametrize("name", ["SYNTH-1", "SYNTH-GRM", "SYNTH-INV"])
def test_round_trip_preserves_contents(tmp_path, name):
    db = build_fixture(name)
    write_database(db, tmp_path)
    back = load_database(tmp_path, db.states)
    assert db.same_contents(back)


def test_round_trip_preserves_extras(tmp_path):
    db = build_fixture("SYNTH-INV")
    write_database(db, tmp_path)
    back = load_database(tmp_path, ["CT"])
    protocols = {p.cn: p.extras.get("INVASIVE_SAMPLING_STATUS_CD") for p in back.plots}
    assert protocols == {"V1": "1", "V2": "1"}


def test_species_written_once_shared(tmp_path):
    db = build_fixture("SYNTH-1")
    files = write_database(db, tmp_path)
    assert "REF_SPECIES.csv" in files
    assert not (tmp_path / "CT_REF_SPECIES.csv").exists()


def test_missing_directory():
    with pytest.raises(LoadError, match="database directory not found"):
        load_database("/nonexistent/nowhere", ["CT"])


def test_unknown_state_abbreviation(tmp_path):
    with pytest.raises(LoadError, match="unknown state abbreviation"):
        load_database(tmp_path, ["ZZ"])


def test_missing_mandatory_table(tmp_path):
    db = build_fixture("SYNTH-1")
    write_database(db, tmp_path)
    (tmp_path / "CT_POP_STRATUM.csv").unlink()
    with pytest.raises(LoadError, match="CT_POP_STRATUM.csv"):
        load_database(tmp_path, ["CT"])


def test_malformed_cell_names_file_row_and_column(tmp_path):
    db = build_fixture("SYNTH-1")
    write_database(db, tmp_path)
    path = tmp_path / "CT_TREE.csv"
    text = path.read_text()
    path.write_text(text.replace("10.0", "ten", 1))
    with pytest.raises(LoadError, match=r"CT_TREE.csv row \d+ column \w+"):
        load_database(tmp_path, ["CT"])


def test_state_spelling_normalized(tmp_path):
    db = build_fixture("SYNTH-1")
    write_database(db, tmp_path)
    for alias in ("ct", "CT", " ct "):
        back = load_database(tmp_path, [alias])
        assert tuple(back.states) == ("CT",)


def test_unsupported_design_rejected(tmp_path):
    db = build_fixture("SYNTH-1")
    write_database(db, tmp_path)
    path = tmp_path / "CT_PLOT.csv"
    header, *rows = path.read_text().splitlines()
    cols = header.split(",")
    idx = cols.index("DESIGNCD")
    cells = rows[0].split(",")
    cells[idx] = "410"
    rows[0] = ",".join(cells)
    path.write_text("\r\n".join([header, *rows]) + "\r\n")
    with pytest.raises(LoadError, match="DESIGNCD 410"):
        load_database(tmp_path, ["CT"])


def test_sizer_derived_from_diameter_when_blank(tmp_path):
    db = build_fixture("SYNTH-1")
    trees = [dataclasses.replace(t, sizer=None) for t in db.trees]
    redone = type(db)(
        plots=db.plots, conds=db.conds, trees=trees, seedlings=db.seedlings,
        dwm=db.dwm, invasives=db.invasives, evaluations=db.evaluations,
        estn_units=db.estn_units, strata=db.strata, assignments=db.assignments,
        species=db.species, states=db.states,
    )
    write_database(redone, tmp_path)
    back = load_database(tmp_path, ["CT"])
    from timberline.model import derive_sizer

    assert all(t.sizer == derive_sizer(t.dia) for t in back.trees)


# ---------------------------------------------------------------------------
# fetch_state against a canned HTTP session
# ---------------------------------------------------------------------------


class _Resp:
    def __init__(self, status, body=b"CN\r\n1\r\n", headers=None):
        self.status_code = status
        self.content = body
        self.headers = headers or {}


class _Session:
    def __init__(self, responses):
        self.responses = responses
        self.urls = []

    def get(self, url, timeout=None):
        self.urls.append(url)
        name = url.rsplit("/", 1)[1]
        return self.responses.get(name, _Resp(200))


def test_fetch_writes_files_and_skips_missing_optional(tmp_path):
    session = _Session({"CT_SEEDLING.csv": _Resp(404)})
    files = fetch_state("CT", tmp_path, base_url="http://mirror.test/csv", session=session)
    assert "CT_PLOT.csv" in files
    assert "CT_SEEDLING.csv" not in files
    assert (tmp_path / "CT_PLOT.csv").read_bytes() == b"CN\r\n1\r\n"
    assert not list(tmp_path.glob("*.part"))


def test_fetch_missing_mandatory_table_fails(tmp_path):
    session = _Session({"CT_PLOT.csv": _Resp(404)})
    with pytest.raises(FetchError, match="CT_PLOT.csv"):
        fetch_state("CT", tmp_path, base_url="http://mirror.test", session=session)


def test_fetch_server_error_is_retriable(tmp_path):
    session = _Session({"CT_PLOT.csv": _Resp(503)})
    with pytest.raises(FetchError) as info:
        fetch_state("CT", tmp_path, base_url="http://mirror.test", session=session)
    assert info.value.retriable
    assert info.value.status == 503


def test_fetch_url_precedence(tmp_path, monkeypatch):
    session = _Session({})
    monkeypatch.setenv("TIMBERLINE_DATAMART_URL", "http://env.test/data/")
    fetch_state("CT", tmp_path, session=session)
    assert session.urls[0] == "http://env.test/data/CT_PLOT.csv"

    session = _Session({})
    fetch_state("CT", tmp_path, base_url="http://arg.test", session=session)
    assert session.urls[0].startswith("http://arg.test/")

    session = _Session({})
    monkeypatch.delenv("TIMBERLINE_DATAMART_URL")
    fetch_state("CT", tmp_path, session=session)
    assert session.urls[0].startswith(DEFAULT_BASE_URL)


def test_fetch_unknown_state(tmp_path):
    with pytest.raises(FetchError, match="unknown state"):
        fetch_state("XX", tmp_path, session=_Session({}))
