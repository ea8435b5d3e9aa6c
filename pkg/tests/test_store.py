"""Index append/tail semantics and the torn-line reader rule."""

import json

from pdwatch.store import append_jsonl, read_new_lines


class TestReadNewLines:
    def test_resume_from_offset(self, tmp_path):
        path = tmp_path / "idx.jsonl"
        append_jsonl(path, {"n": 1})
        records, offset = read_new_lines(path, 0)
        assert records == [{"n": 1}]
        append_jsonl(path, {"n": 2})
        records, offset = read_new_lines(path, offset)
        assert records == [{"n": 2}]
        # nothing new
        assert read_new_lines(path, offset) == ([], offset)

    def test_missing_file(self, tmp_path):
        assert read_new_lines(tmp_path / "nope.jsonl", 0) == ([], 0)

    def test_torn_final_line_ignored_until_complete(self, tmp_path):
        path = tmp_path / "idx.jsonl"
        append_jsonl(path, {"n": 1})
        with open(path, "a") as fh:
            fh.write('{"n": 2, "partial": tr')  # no newline, invalid JSON
        records, offset = read_new_lines(path, 0)
        assert records == [{"n": 1}]
        # writer finishes the line
        with open(path, "a") as fh:
            fh.write('ue}\n')
        records, offset = read_new_lines(path, offset)
        assert records == [{"n": 2, "partial": True}]

    def test_malformed_complete_line_skipped(self, tmp_path):
        path = tmp_path / "idx.jsonl"
        with open(path, "w") as fh:
            fh.write('{"ok": 1}\n')
            fh.write("not json at all\n")
            fh.write('{"ok": 2}\n')
        records, _ = read_new_lines(path, 0)
        assert records == [{"ok": 1}, {"ok": 2}]

    def test_append_only(self, tmp_path):
        path = tmp_path / "idx.jsonl"
        append_jsonl(path, {"a": 1})
        first = path.read_bytes()
        append_jsonl(path, {"b": 2})
        assert path.read_bytes().startswith(first)
        lines = path.read_text().splitlines()
        assert [json.loads(l) for l in lines] == [{"a": 1}, {"b": 2}]
