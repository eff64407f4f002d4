from collections import defaultdict

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curate.catalog import (
    ClipRecord,
    CorpusCatalog,
    MissingColumn,
    clip_id_from_path,
    filter_demographic,
    filter_validated,
    parse_catalog,
    top_contributors,
)

HEADER = "client_id\tpath\tsentence\tup_votes\tdown_votes\tage\tgender\n"


def rec(cid, spk="s1", up=3, gender="female", age="twenties"):
    return ClipRecord(cid, spk, f"{cid}.mp3", "text", up, 0, age, gender)


def test_parses_single_row():
    cat = parse_catalog(HEADER + "s1\ta/x1.mp3\tyantuma ŋende ndeete\t3\t0\ttwenties\tfemale\n")
    assert len(cat) == 1
    r = cat.records[0]
    assert (r.clip_id, r.speaker_id, r.up_votes, r.gender) == ("x1", "s1", 3, "female")
    assert r.transcript == "yantuma ŋende ndeete"
    assert r.age == "twenties"


def test_header_only_is_empty():
    assert len(parse_catalog(HEADER)) == 0


def test_missing_column():
    with pytest.raises(MissingColumn) as err:
        parse_catalog("client_id\tpath\tsentence\tup_votes\tdown_votes\tage\n")
    assert err.value.name == "gender"


def test_malformed_rows_skipped_and_reported():
    rows = [
        "s1\ta.mp3\tone two three\t3\t0\t\tfemale",
        "s2\tb.mp3\tone two three\tabc\t0\t\tfemale",
        "s3\tc.mp3\tone two three\t4\t1\t\t",
        "s4\ta.mp3\tdup\t5\t0\t\tfemale",
        "s5\td.mp3\tshort",
        "s6\te.mp3\tfine\t²\t0\t\tfemale",
    ]
    text = HEADER + "\n".join(rows) + "\n"
    cat = parse_catalog(text)
    # independent oracle: split lines by hand
    expect = []
    seen = set()
    for line in text.splitlines()[1:]:
        f = line.split("\t")
        if len(f) < 7 or not (f[3].isascii() and f[3].isdigit()) or f[1].rsplit(".", 1)[0] in seen:
            continue
        seen.add(f[1].rsplit(".", 1)[0])
        expect.append(f[1].rsplit(".", 1)[0])
    assert [r.clip_id for r in cat] == expect == ["a", "c"]
    reasons = {e.line_no: e.reason for e in cat.errors}
    assert reasons[3] == "non-numeric up_votes"
    assert "duplicate" in reasons[5]
    assert "fields" in reasons[6]
    assert reasons[7] == "non-numeric up_votes"
    assert cat.records[1].gender is None and cat.records[1].age is None


def test_crlf_and_extra_columns():
    text = "client_id\tpath\tsentence\tup_votes\tdown_votes\tage\tgender\taccent\r\n"
    text += "s1\tclips/x.mp3\thello there you\t2\t0\tthirties\tfemale\tug\r\n"
    cat = parse_catalog(text)
    assert cat.records[0].gender == "female"
    assert cat.records[0].up_votes == 2


def test_comma_delimiter():
    cat = parse_catalog(HEADER.replace("\t", ",") + "s1,x.mp3,hi,3,0,,female\n", delimiter=",")
    assert cat.records[0].clip_id == "x"


@pytest.mark.parametrize(
    "path,cid",
    [("a/b/c.mp3", "c"), ("c.mp3", "c"), ("dir\\c.mp3", "c"), ("noext", "noext"), ("a.b.mp3", "a.b")],
)
def test_clip_id_from_path(path, cid):
    assert clip_id_from_path(path) == cid


def test_validated_boundary():
    cat = CorpusCatalog((rec("a", up=3), rec("b", up=2)))
    assert [r.clip_id for r in filter_validated(cat)] == ["a"]
    assert len(filter_validated(CorpusCatalog(()))) == 0


def test_demographic():
    cat = CorpusCatalog((rec("a"), rec("b", gender=None), rec("c", age="thirties"), rec("d", gender="Female")))
    assert [r.clip_id for r in filter_demographic(cat, "female")] == ["a", "c", "d"]
    assert [r.clip_id for r in filter_demographic(cat, "female", {"twenties"})] == ["a", "d"]
    with pytest.raises(ValueError):
        filter_demographic(cat, " ")


def test_top_contributors_examples():
    cat = CorpusCatalog(tuple(rec(f"a{i}", "s1") for i in range(5)) + tuple(rec(f"b{i}", "s2") for i in range(7)))
    assert top_contributors(cat, 1) == [("s2", 7)]
    assert top_contributors(cat, 10) == [("s2", 7), ("s1", 5)]
    tie = CorpusCatalog(tuple(rec(f"a{i}", "s2") for i in range(4)) + tuple(rec(f"b{i}", "s1") for i in range(4)))
    assert top_contributors(tie, 2) == [("s1", 4), ("s2", 4)]


records = st.lists(
    st.builds(
        rec,
        st.text("abcdef0123", min_size=1, max_size=6),
        spk=st.sampled_from(["s1", "s2", "s3", "s4"]),
        up=st.integers(0, 6),
        gender=st.sampled_from(["female", "male", None]),
    ),
    max_size=40,
    unique_by=lambda r: r.clip_id,
)


@settings(max_examples=100, deadline=None)
@given(records)
def test_filter_properties(recs):
    cat = CorpusCatalog(tuple(recs))
    once = filter_validated(cat)
    assert filter_validated(once).records == once.records
    for filtered in (once, filter_demographic(cat, "female")):
        assert len(filtered) <= len(cat)
        assert all(r in cat.records for r in filtered)
    counts = defaultdict(int)
    for r in recs:
        counts[r.speaker_id] += 1
    assert dict(top_contributors(cat, 10)) == dict(counts)
