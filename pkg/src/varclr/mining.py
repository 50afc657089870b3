"""Mine weakly-supervised rename pairs from unified commit diffs.

A commit qualifies when it is small (fewer than ``max_lines`` changed lines)
and the whole change is explained by substituting one identifier for another
everywhere in the removed lines.
"""

from __future__ import annotations

import csv
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .tokenizer import is_valid_name

log = logging.getLogger(__name__)

DEFAULT_MAX_LINES = 6

_IDENT_RE = re.compile(r"(?<![A-Za-z0-9_])[A-Za-z_][A-Za-z0-9_]*")
_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")
_COMMIT_RE = re.compile(r"^commit (\S+)")


class DiffParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class Hunk:
    path: str
    removed: list[str] = field(default_factory=list)
    added: list[str] = field(default_factory=list)


@dataclass
class CommitDiff:
    commit_id: str
    hunks: list[Hunk] = field(default_factory=list)

    @property
    def changed_lines(self) -> int:
        return sum(len(h.removed) + len(h.added) for h in self.hunks)


@dataclass(frozen=True)
class RenamePair:
    before: str
    after: str
    source_commit: str = ""


def _strip_path(raw: str) -> str:
    path = raw.split("\t", 1)[0].strip()
    if path.startswith(("a/", "b/")):
        path = path[2:]
    return path


def parse_unified_diff(text: str, default_commit: str = "") -> list[CommitDiff]:
    """Parse unified diff text into commits.

    The text may hold a single commit or a ``git log -p`` style stream where
    each commit starts with a ``commit <id>`` line.  Anything outside file
    headers and hunks (author lines, messages, ``index`` lines) is ignored.
    """
    lines = text.splitlines()
    commits: list[CommitDiff] = []
    current: Optional[CommitDiff] = None
    i = 0
    n = len(lines)

    def ensure_commit() -> CommitDiff:
        nonlocal current
        if current is None:
            current = CommitDiff(commit_id=default_commit)
            commits.append(current)
        return current

    while i < n:
        line = lines[i]
        m = _COMMIT_RE.match(line)
        if m:
            current = CommitDiff(commit_id=m.group(1))
            commits.append(current)
            i += 1
            continue
        if line.startswith("--- "):
            if i + 1 >= n or not lines[i + 1].startswith("+++ "):
                raise DiffParseError(i + 1, "'---' header not followed by '+++'")
            old_path = _strip_path(line[4:])
            new_path = _strip_path(lines[i + 1][4:])
            path = new_path if new_path != "/dev/null" else old_path
            i += 2
            if i >= n or not lines[i].startswith("@@"):
                raise DiffParseError(i + 1, "expected '@@' hunk header")
            commit = ensure_commit()
            while i < n and lines[i].startswith("@@"):
                hunk, i = _parse_hunk(lines, i, path)
                commit.hunks.append(hunk)
            continue
        if line.startswith("@@"):
            raise DiffParseError(i + 1, "hunk header outside a file section")
        i += 1
    return commits


def _parse_hunk(lines: list[str], i: int, path: str) -> tuple[Hunk, int]:
    m = _HUNK_RE.match(lines[i])
    if not m:
        raise DiffParseError(i + 1, f"malformed hunk header {lines[i]!r}")
    old_left = int(m.group(2)) if m.group(2) is not None else 1
    new_left = int(m.group(4)) if m.group(4) is not None else 1
    hunk = Hunk(path=path)
    header_line = i + 1
    i += 1
    while old_left > 0 or new_left > 0:
        if i >= len(lines):
            raise DiffParseError(header_line, "hunk body shorter than its header declares")
        line = lines[i]
        tag, body = line[:1], line[1:]
        if tag == " " or line == "":
            old_left -= 1
            new_left -= 1
        elif tag == "-":
            hunk.removed.append(body)
            old_left -= 1
        elif tag == "+":
            hunk.added.append(body)
            new_left -= 1
        elif tag == "\\":
            pass
        else:
            raise DiffParseError(i + 1, f"unexpected line in hunk body {line!r}")
        if old_left < 0 or new_left < 0:
            raise DiffParseError(header_line, "hunk body longer than its header declares")
        i += 1
    while i < len(lines) and lines[i].startswith("\\"):
        i += 1
    return hunk, i


def _split_idents(line: str) -> tuple[list[str], list[str]]:
    """Return (separators, identifiers); separators has one more entry."""
    seps, idents = [], []
    pos = 0
    for m in _IDENT_RE.finditer(line):
        seps.append(line[pos:m.start()])
        idents.append(m.group(0))
        pos = m.end()
    seps.append(line[pos:])
    return seps, idents


def apply_rename(line: str, old: str, new: str) -> str:
    return _IDENT_RE.sub(lambda m: new if m.group(0) == old else m.group(0), line)


def extract_rename(diff: CommitDiff, max_lines: int = DEFAULT_MAX_LINES) -> Optional[RenamePair]:
    total = diff.changed_lines
    if total == 0 or total >= max_lines:
        return None
    if any(len(h.removed) != len(h.added) for h in diff.hunks):
        return None

    mapping: Optional[tuple[str, str]] = None
    for h in diff.hunks:
        for old_line, new_line in zip(h.removed, h.added):
            if old_line == new_line:
                continue
            old_seps, old_ids = _split_idents(old_line)
            new_seps, new_ids = _split_idents(new_line)
            if old_seps != new_seps or len(old_ids) != len(new_ids):
                return None
            for a, b in zip(old_ids, new_ids):
                if a == b:
                    continue
                if mapping is None:
                    mapping = (a, b)
                elif mapping != (a, b):
                    return None
    if mapping is None:
        return None
    old, new = mapping
    # the substitution must explain every line, including unchanged occurrences
    for h in diff.hunks:
        if [apply_rename(r, old, new) for r in h.removed] != h.added:
            return None
    if not (is_valid_name(old) and is_valid_name(new)):
        return None
    return RenamePair(before=old, after=new, source_commit=diff.commit_id)


def mine_corpus(
    diffs: Iterable[CommitDiff],
    max_lines: int = DEFAULT_MAX_LINES,
    workers: int = 1,
) -> list[RenamePair]:
    """Extract and deduplicate rename pairs, keeping first-seen order."""
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            found = list(pool.map(extract_rename, diffs, _repeat(max_lines), chunksize=64))
    else:
        found = [extract_rename(d, max_lines) for d in diffs]
    seen: set[tuple[str, str]] = set()
    out = []
    for pair in found:
        if pair is None:
            continue
        key = (pair.before, pair.after)
        if key in seen:
            continue
        seen.add(key)
        out.append(pair)
    return out


def _repeat(value) -> Iterator:
    while True:
        yield value


def read_diff_dir(path) -> tuple[list[CommitDiff], list[str]]:
    """Parse every file under ``path`` (or ``path`` itself if a file).

    Files that fail to parse are skipped; their errors are returned.
    """
    path = Path(path)
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    commits: list[CommitDiff] = []
    errors: list[str] = []
    for f in files:
        try:
            text = f.read_text(encoding="utf-8", errors="replace")
            commits.extend(parse_unified_diff(text, default_commit=f.stem))
        except DiffParseError as e:
            errors.append(f"{f}: {e}")
            log.warning("skipping %s: %s", f, e)
    return commits, errors


def write_pairs(pairs: Iterable[RenamePair], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        for p in pairs:
            w.writerow([p.before, p.after, p.source_commit])


def read_pairs(path) -> list[RenamePair]:
    """Read a pairs TSV (``before<TAB>after[<TAB>commit]``)."""
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected at least two tab-separated names")
            pairs.append(RenamePair(parts[0], parts[1], parts[2] if len(parts) > 2 else ""))
    return pairs
