"""Event line parsing and stream reading."""

import pytest

from zsd.ingest import EventStream, ParseError, SchemaError, parse_event_line, read_stream
from zsd.types import EventKind, Truth


def test_parse_write_event():
    e = parse_event_line(
        '{"ts":0,"entity":"p1","kind":"file_write","bytes":4096,"entropy":7.9,"path":"/a.docx"}'
    )
    assert e.ts == 0
    assert e.entity == "p1"
    assert e.kind is EventKind.FILE_WRITE
    assert e.bytes == 4096
    assert e.entropy == 7.9
    assert e.path == "/a.docx"
    assert e.truth is None


def test_parse_rename_event():
    e = parse_event_line(
        '{"ts":5,"entity":"p1","kind":"file_rename","path":"/a.docx",'
        '"ext_before":"docx","ext_after":"lock"}'
    )
    assert e.kind is EventKind.FILE_RENAME
    assert e.ext_before == "docx"
    assert e.ext_after == "lock"


def test_entropy_out_of_range_rejected():
    with pytest.raises(SchemaError, match="entropy"):
        parse_event_line('{"ts":1,"entity":"p1","kind":"file_write","entropy":9.5}')


def test_malformed_json_is_parse_error():
    with pytest.raises(ParseError):
        parse_event_line("{not json", line_no=7)


@pytest.mark.parametrize(
    "line,fragment",
    [
        ('{"entity":"p","kind":"file_read"}', "ts"),
        ('{"ts":1,"kind":"file_read"}', "entity"),
        ('{"ts":1,"entity":"p"}', "kind"),
        ('{"ts":-1,"entity":"p","kind":"file_read"}', "ts"),
        ('{"ts":1.5,"entity":"p","kind":"file_read"}', "ts"),
        ('{"ts":1,"entity":"p","kind":"nope"}', "kind"),
        ('{"ts":1,"entity":"p","kind":"file_read","bytes":-4}', "bytes"),
        ('{"ts":1,"entity":"p","kind":"file_read","truth":"evil"}', "truth"),
        ('{"ts":1,"entity":"p","kind":"file_rename","path":"/a"}', "file_rename"),
        ('{"ts":1,"entity":"p","kind":"file_read","ext_before":"a","ext_after":"b"}',
         "ext_before"),
    ],
)
def test_schema_violations(line, fragment):
    with pytest.raises(SchemaError, match=fragment):
        parse_event_line(line)


def test_truth_parsed_when_present():
    e = parse_event_line('{"ts":1,"entity":"p","kind":"proc_spawn","truth":"malicious"}')
    assert e.truth is Truth.MALICIOUS


def test_unknown_fields_ignored_unless_strict():
    line = '{"ts":1,"entity":"p","kind":"file_read","wat":1}'
    parse_event_line(line)
    with pytest.raises(SchemaError, match="wat"):
        parse_event_line(line, strict=True)


def _write(tmp_path, name, lines):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(p)


def test_read_stream_in_order(tmp_path):
    path = _write(tmp_path, "a.jsonl", [
        '{"ts":1,"entity":"a","kind":"file_read"}',
        '{"ts":2,"entity":"b","kind":"file_read"}',
        '{"ts":3,"entity":"a","kind":"file_write"}',
    ])
    events = list(read_stream(EventStream(source=path)))
    assert [e.ts for e in events] == [1, 2, 3]


def test_read_stream_skips_and_counts_bad_lines(tmp_path):
    path = _write(tmp_path, "b.jsonl", [
        '{"ts":1,"entity":"a","kind":"file_read"}',
        "garbage",
        '{"ts":2,"entity":"a","kind":"file_read"}',
    ])
    stream = EventStream(source=path)
    events = list(read_stream(stream))
    assert len(events) == 2
    assert stream.skipped_count == 1


def test_read_stream_strict_aborts(tmp_path):
    path = _write(tmp_path, "c.jsonl", [
        '{"ts":1,"entity":"a","kind":"file_read"}',
        "garbage",
    ])
    with pytest.raises(ParseError):
        list(read_stream(EventStream(source=path, strict=True)))


def test_empty_file_yields_nothing(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert list(read_stream(EventStream(source=str(path)))) == []


def test_monotonicity_warning_counter(tmp_path):
    path = _write(tmp_path, "d.jsonl", [
        '{"ts":5,"entity":"a","kind":"file_read"}',
        '{"ts":3,"entity":"b","kind":"file_read"}',
        '{"ts":9,"entity":"a","kind":"file_read"}',
    ])
    stream = EventStream(source=path)
    events = list(read_stream(stream))
    assert len(events) == 3
    assert stream.monotonicity_warnings == 1


def test_per_entity_subsequences_recover_the_multiset(tmp_path):
    import random
    rng = random.Random(4)
    lines = []
    for i in range(200):
        ent = f"e{rng.randrange(5)}"
        lines.append(f'{{"ts":{i},"entity":"{ent}","kind":"file_read"}}')
    path = _write(tmp_path, "e.jsonl", lines)
    events = list(read_stream(EventStream(source=path)))
    by_entity = {}
    for e in events:
        by_entity.setdefault(e.entity, []).append(e)
    # per-entity order is file order restricted to that entity
    for ent, seq in by_entity.items():
        assert [e.ts for e in seq] == sorted(e.ts for e in seq)
    flat = [e for seq in by_entity.values() for e in seq]
    assert sorted(e.ts for e in flat) == [e.ts for e in events]
