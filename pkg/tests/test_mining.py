import pytest

from varclr.mining import (
    CommitDiff,
    DiffParseError,
    Hunk,
    RenamePair,
    apply_rename,
    extract_rename,
    mine_corpus,
    parse_unified_diff,
    read_diff_dir,
    read_pairs,
    write_pairs,
)

ONE_HUNK = """\
--- a/src/Foo.cs
+++ b/src/Foo.cs
@@ -10,3 +10,3 @@ class Foo
 void Run() {
-    int max = 0;
+    int maximum = 0;
 }
"""

GIT_LOG = """\
commit 1111111
Author: Someone <someone@example.com>
Date:   Mon Jan 1 00:00:00 2020

    rename max

diff --git a/A.cs b/A.cs
index abc..def 100644
--- a/A.cs
+++ b/A.cs
@@ -1,2 +1,2 @@
-int max = 0;
-return max;
+int maximum = 0;
+return maximum;
commit 2222222
Author: Someone <someone@example.com>

    flip an operator

--- a/B.cs
+++ b/B.cs
@@ -5 +5 @@
-int a = b + c;
+int a = b - c;
"""


def commit(removed, added, cid="c"):
    return CommitDiff(cid, [Hunk("f.cs", list(removed), list(added))])


class TestParse:
    def test_one_hunk(self):
        [c] = parse_unified_diff(ONE_HUNK, default_commit="x")
        assert c.commit_id == "x"
        [h] = c.hunks
        assert h.path == "src/Foo.cs"
        assert (len(h.removed), len(h.added)) == (1, 1)
        assert h.removed == ["    int max = 0;"]
        assert h.added == ["    int maximum = 0;"]

    def test_empty(self):
        assert parse_unified_diff("") == []

    def test_missing_hunk_header(self):
        with pytest.raises(DiffParseError) as e:
            parse_unified_diff("--- a/x\n+++ b/x\n-foo\n+bar\n")
        assert e.value.lineno == 3

    def test_truncated_hunk(self):
        with pytest.raises(DiffParseError):
            parse_unified_diff("--- a/x\n+++ b/x\n@@ -1,3 +1,3 @@\n-foo\n+bar\n")

    def test_stream(self):
        commits = parse_unified_diff(GIT_LOG)
        assert [c.commit_id for c in commits] == ["1111111", "2222222"]
        assert commits[0].changed_lines == 4
        assert commits[1].hunks[0].removed == ["int a = b + c;"]

    def test_dashes_inside_body(self):
        text = "--- a/x\n+++ b/x\n@@ -1 +1 @@\n--- a comment\n+++ a comment\n"
        [c] = parse_unified_diff(text)
        assert c.hunks[0].removed == ["-- a comment"]
        assert c.hunks[0].added == ["++ a comment"]


class TestExtract:
    def test_simple_rename(self):
        pair = extract_rename(commit(["int max = 0;"], ["int maximum = 0;"], "abc"))
        assert pair == RenamePair("max", "maximum", "abc")

    def test_operator_change(self):
        assert extract_rename(commit(["int a = b + c;"], ["int a = b - c;"])) is None

    def test_size_filter(self):
        removed = ["x = max;"] * 3 + ["y = max + 1;"]
        added = ["x = maximum;"] * 3 + ["y = maximum + 1;"]
        big = commit(removed[:3] + ["z = max;"], added[:3] + ["z = maximum;"])
        big.hunks.append(Hunk("g.cs", removed[3:], added[3:]))
        assert big.changed_lines == 10
        assert extract_rename(big) is None
        assert extract_rename(big, max_lines=11) is not None

    def test_seven_lines(self):
        c = commit(["a = n;"] * 3 + ["b = n;"], ["a = count;"] * 3)
        assert c.changed_lines == 7
        assert extract_rename(c) is None

    def test_five_lines_is_small_enough(self):
        c = CommitDiff("c", [Hunk("f", ["a = n;", "b = n;"], ["a = count;", "b = count;"]),
                             Hunk("g", [], ["// note"])])
        assert c.changed_lines == 5
        # unequal removed/added counts in a hunk can never be a pure rename
        assert extract_rename(c) is None

    def test_two_renames(self):
        assert extract_rename(commit(["a = b;"], ["x = y;"])) is None

    def test_partial_substitution_rejected(self):
        # the second occurrence of n is left alone, so n -> count does not replay
        assert extract_rename(commit(["f(n, n);"], ["f(count, n);"])) is None

    def test_substring_occurrences_untouched(self):
        pair = extract_rename(commit(["idx = idx2 + idx;"], ["i = idx2 + i;"]))
        assert pair == RenamePair("idx", "i", "c")

    def test_numbers_not_identifiers(self):
        assert extract_rename(commit(["x = 10;"], ["x = 20;"])) is None
        assert extract_rename(commit(["x = 0x1F;"], ["x = 0x2F;"])) is None

    def test_case_only_rename_kept(self):
        assert extract_rename(commit(["maxlen = 1;"], ["maxLen = 1;"])) == RenamePair("maxlen", "maxLen", "c")

    def test_no_change(self):
        assert extract_rename(CommitDiff("c", [])) is None
        assert extract_rename(commit(["a;"], ["a;"])) is None

    def test_underscore_only_names_rejected(self):
        assert extract_rename(commit(["_ = 1;"], ["__ = 1;"])) is None

    def test_replayable(self):
        cases = [
            (["int max = 0;", "return max * max;"], ["int maximum = 0;", "return maximum * maximum;"]),
            (["self.fd.close()"], ["self.file_descriptor.close()"]),
        ]
        for removed, added in cases:
            pair = extract_rename(commit(removed, added))
            assert pair is not None
            assert [apply_rename(r, pair.before, pair.after) for r in removed] == added


class TestMine:
    def test_dedup(self):
        c = commit(["int max = 0;"], ["int maximum = 0;"])
        assert len(mine_corpus([c, c])) == 1

    def test_empty(self):
        assert mine_corpus([]) == []

    def test_mixed(self):
        out = mine_corpus(parse_unified_diff(GIT_LOG))
        assert out == [RenamePair("max", "maximum", "1111111")]

    def test_order_and_invariants(self):
        diffs = [commit([f"v{i} = 1;"], [f"w{i} = 1;"], str(i)) for i in range(5)] * 2
        out = mine_corpus(diffs)
        assert [p.before for p in out] == [f"v{i}" for i in range(5)]
        assert len({(p.before, p.after) for p in out}) == len(out)
        assert all(p.before != p.after for p in out)

    def test_workers_same_result(self):
        diffs = [commit([f"v{i} = 1;"], [f"w{i} = 1;"], str(i)) for i in range(50)]
        assert mine_corpus(diffs, workers=2) == mine_corpus(diffs)


def test_dir_skip_and_report(tmp_path):
    (tmp_path / "good.diff").write_text(ONE_HUNK)
    (tmp_path / "bad.diff").write_text("--- a/x\n+++ b/x\nnot a hunk\n")
    commits, errors = read_diff_dir(tmp_path)
    assert len(commits) == 1 and commits[0].commit_id == "good"
    assert len(errors) == 1 and "bad.diff" in errors[0]


def test_pairs_tsv_round_trip(tmp_path):
    pairs = [RenamePair("max", "maximum", "c1"), RenamePair("fd", "file_descriptor", "c2")]
    path = tmp_path / "pairs.tsv"
    write_pairs(pairs, path)
    assert path.read_text() == "max\tmaximum\tc1\nfd\tfile_descriptor\tc2\n"
    assert read_pairs(path) == pairs
