"""Dump ingestion and snippet corpus construction.

Reads the Posts / PostBlockVersion CSV dumps, keeps code blocks of answers
whose question carries exactly the requested tag string, and writes the
resulting snippets as JSON lines.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import html
import json
import logging
import re
import sys
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

DEFAULT_TAG_FILTER = "<python>"

POSTS_HEADER = ("Id", "PostTypeId", "ParentId", "AcceptedAnswerId", "CreationDate", "Score", "Tags")
BLOCKS_HEADER = ("Id", "PostId", "PostBlockTypeId", "RootPostBlockVersionId", "LineCount", "Length", "Content")
REFS_HEADER = ("PostId", "Url")

csv.field_size_limit(sys.maxsize)


class IngestError(Exception):
    """A dump file could not be read."""


class FormatError(IngestError):
    """A dump file's header does not match the expected columns."""


class PostType(str, enum.Enum):
    QUESTION = "question"
    ANSWER = "answer"
    OTHER = "other"

    @classmethod
    def from_code(cls, code: int) -> PostType:
        return {1: cls.QUESTION, 2: cls.ANSWER}.get(code, cls.OTHER)


class BlockType(str, enum.Enum):
    TEXT = "text"
    CODE = "code"


@dataclass(frozen=True)
class PostRecord:
    id: int
    parent_id: int | None
    post_type: PostType
    score: int
    tags: str
    created_at: datetime
    accepted_answer_id: int | None = None


@dataclass(frozen=True)
class PostBlockRecord:
    block_id: int
    post_id: int
    block_type: BlockType
    root_block_version_id: int
    content: str
    line_count: int
    length: int


@dataclass(frozen=True)
class Snippet:
    snippet_id: int
    post_id: int
    root_block_version_id: int
    content: str
    line_count: int
    answer_score: int
    is_accepted: bool
    created_at: datetime
    github_ref_count: int = 0
    tags: tuple[str, ...] = ("python",)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["created_at"] = format_timestamp(self.created_at)
        d["tags"] = list(self.tags)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Snippet:
        return cls(
            snippet_id=int(d["snippet_id"]),
            post_id=int(d["post_id"]),
            root_block_version_id=int(d["root_block_version_id"]),
            content=d["content"],
            line_count=int(d["line_count"]),
            answer_score=int(d["answer_score"]),
            is_accepted=bool(d["is_accepted"]),
            created_at=parse_timestamp(d["created_at"]),
            github_ref_count=int(d.get("github_ref_count", 0)),
            tags=tuple(d.get("tags", ("python",))),
        )


@dataclass
class IngestStats:
    rows: int = 0
    skipped: int = 0


@dataclass
class CorpusSummary:
    questions_matched: int = 0
    answers_matched: int = 0
    answers_total: int = 0
    orphan_answers: int = 0
    blocks_of_matched_answers: int = 0
    code_blocks_kept: int = 0
    text_blocks_dropped: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def parse_timestamp(value: str) -> datetime:
    value = value.strip()
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    ts = datetime.fromisoformat(value)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def normalize_tags(raw: str) -> tuple[str, ...]:
    return tuple(re.findall(r"<([^<>]+)>", raw))


def count_lines(content: str) -> int:
    text = content.replace("\r\n", "\n").replace("\r", "\n").rstrip("\n")
    return len(text.split("\n")) if text else 0


def _optional_int(value: str) -> int | None:
    value = value.strip()
    return int(value) if value else None


def _read_rows(path: Path | str, header: tuple[str, ...], stats: IngestStats) -> Iterator[dict[str, str]]:
    try:
        fh = open(path, newline="", encoding="utf-8", errors="replace")
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, expected header {','.join(header)}") from None
        except csv.Error as e:
            raise FormatError(f"{path}: unreadable header: {e}") from e
        missing = [col for col in header if col not in found]
        if missing:
            raise FormatError(f"{path}: missing column(s) {', '.join(missing)}")
        index = {col: found.index(col) for col in header}
        while True:
            try:
                row = next(reader)
            except StopIteration:
                return
            except csv.Error:
                stats.rows += 1
                stats.skipped += 1
                continue
            stats.rows += 1
            if len(row) != len(found):
                stats.skipped += 1
                continue
            yield {col: row[i] for col, i in index.items()}


def ingest_posts(path: Path | str, stats: IngestStats | None = None) -> Iterator[PostRecord]:
    """Stream PostRecords from a Posts CSV dump. Malformed rows are counted in ``stats``."""
    stats = stats if stats is not None else IngestStats()
    for row in _read_rows(path, POSTS_HEADER, stats):
        try:
            post_type = PostType.from_code(int(row["PostTypeId"]))
            record = PostRecord(
                id=int(row["Id"]),
                parent_id=_optional_int(row["ParentId"]),
                post_type=post_type,
                score=int(row["Score"] or 0),
                tags=row["Tags"],
                created_at=parse_timestamp(row["CreationDate"]),
                accepted_answer_id=_optional_int(row["AcceptedAnswerId"]),
            )
        except ValueError:
            stats.skipped += 1
            continue
        if post_type is PostType.ANSWER and record.parent_id is None:
            stats.skipped += 1
            continue
        if post_type is PostType.QUESTION and record.parent_id is not None:
            stats.skipped += 1
            continue
        yield record


def ingest_blocks(path: Path | str, stats: IngestStats | None = None) -> Iterator[PostBlockRecord]:
    """Stream PostBlockRecords from a PostBlockVersion CSV dump.

    ``line_count`` and ``length`` are recomputed from the content so they
    always agree with it, whatever the dump says.
    """
    stats = stats if stats is not None else IngestStats()
    for row in _read_rows(path, BLOCKS_HEADER, stats):
        try:
            type_code = int(row["PostBlockTypeId"])
            if type_code not in (1, 2):
                raise ValueError(type_code)
            content = row["Content"]
            record = PostBlockRecord(
                block_id=int(row["Id"]),
                post_id=int(row["PostId"]),
                block_type=BlockType.CODE if type_code == 2 else BlockType.TEXT,
                root_block_version_id=int(row["RootPostBlockVersionId"]),
                content=content,
                line_count=count_lines(content),
                length=len(content),
            )
        except ValueError:
            stats.skipped += 1
            continue
        yield record


def build_corpus(
    posts: Iterable[PostRecord],
    blocks: Iterable[PostBlockRecord],
    tag_filter: str = DEFAULT_TAG_FILTER,
) -> tuple[list[Snippet], CorpusSummary]:
    """Join answers to their questions, filter by exact tag string, keep code blocks."""
    if not tag_filter:
        raise ValueError("tag_filter must be non-empty")
    summary = CorpusSummary()
    questions: dict[int, PostRecord] = {}
    answers: list[PostRecord] = []
    for post in posts:
        if post.post_type is PostType.QUESTION:
            questions[post.id] = post
        elif post.post_type is PostType.ANSWER:
            answers.append(post)

    matched_questions: set[int] = set()
    matched: dict[int, tuple[PostRecord, PostRecord]] = {}
    for answer in answers:
        summary.answers_total += 1
        question = questions.get(answer.parent_id)
        if question is None:
            summary.orphan_answers += 1
            continue
        if question.tags != tag_filter:
            continue
        matched[answer.id] = (answer, question)
        matched_questions.add(question.id)
    summary.questions_matched = len(matched_questions)
    summary.answers_matched = len(matched)

    snippets = []
    tags = normalize_tags(tag_filter)
    for block in blocks:
        pair = matched.get(block.post_id)
        if pair is None:
            continue
        summary.blocks_of_matched_answers += 1
        if block.block_type is not BlockType.CODE:
            summary.text_blocks_dropped += 1
            continue
        summary.code_blocks_kept += 1
        answer, question = pair
        snippets.append(
            Snippet(
                snippet_id=block.block_id,
                post_id=answer.id,
                root_block_version_id=block.root_block_version_id,
                content=block.content,
                line_count=block.line_count,
                answer_score=answer.score,
                is_accepted=question.accepted_answer_id == answer.id,
                created_at=answer.created_at,
                tags=tags,
            )
        )
    snippets.sort(key=lambda s: s.snippet_id)
    return snippets, summary


def select_versions(snippets: Iterable[Snippet], mode: str = "latest_per_root_block") -> list[Snippet]:
    """Keep the newest block version per root block, or everything for ``all_versions``."""
    snippets = list(snippets)
    if mode == "all_versions":
        return snippets
    if mode != "latest_per_root_block":
        raise ValueError(f"unknown version mode {mode!r}")
    latest: dict[int, Snippet] = {}
    for s in snippets:
        cur = latest.get(s.root_block_version_id)
        if cur is None or s.snippet_id > cur.snippet_id:
            latest[s.root_block_version_id] = s
    return sorted(latest.values(), key=lambda s: s.snippet_id)


_IMPORT_RE = re.compile(r"^\s*import\s+(.+)$")
_FROM_RE = re.compile(r"^\s*from\s+(\S+)\s+import\b")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def imported_modules(source: str) -> list[str]:
    """Top-level module names named by ``import``/``from ... import`` lines, in order."""
    found = []
    for line in html.unescape(source).splitlines():
        for stmt in line.split(";"):
            m = _FROM_RE.match(stmt)
            if m:
                head = m.group(1).split(".")[0]
                if _IDENT_RE.match(head):
                    found.append(head)
                continue
            m = _IMPORT_RE.match(stmt)
            if not m:
                continue
            for part in m.group(1).split(","):
                words = part.split()
                if not words:
                    continue
                head = words[0].split(".")[0]
                if _IDENT_RE.match(head):
                    found.append(head)
    return found


def import_counts(snippets: Iterable[Snippet]) -> list[tuple[str, int]]:
    counts = Counter()
    for s in snippets:
        counts.update(imported_modules(s.content))
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def top_imports(snippets: Iterable[Snippet], n: int) -> list[tuple[str, int]]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return import_counts(snippets)[:n]


def read_github_refs(path: Path | str, stats: IngestStats | None = None) -> dict[int, set[str]]:
    stats = stats if stats is not None else IngestStats()
    refs: dict[int, set[str]] = {}
    for row in _read_rows(path, REFS_HEADER, stats):
        url = row["Url"].strip()
        try:
            post_id = int(row["PostId"])
        except ValueError:
            stats.skipped += 1
            continue
        if not url:
            stats.skipped += 1
            continue
        refs.setdefault(post_id, set()).add(url)
    return refs


def attach_github_refs(snippets: Iterable[Snippet], refs: dict[int, set[str]]) -> list[Snippet]:
    return [dataclasses.replace(s, github_ref_count=len(refs.get(s.post_id, ()))) for s in snippets]


def write_corpus(snippets: Iterable[Snippet], path: Path | str) -> int:
    ordered = sorted(snippets, key=lambda s: s.snippet_id)
    with open(path, "w", encoding="utf-8") as fh:
        for s in ordered:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")
    return len(ordered)


def read_corpus(path: Path | str) -> list[Snippet]:
    with open(path, encoding="utf-8") as fh:
        return [Snippet.from_dict(json.loads(line)) for line in fh if line.strip()]


def ingest(
    posts_path: Path | str,
    blocks_path: Path | str,
    refs_path: Path | str | None = None,
    tag_filter: str = DEFAULT_TAG_FILTER,
    versions: str = "latest_per_root_block",
) -> tuple[list[Snippet], dict]:
    """Full dump-to-corpus pipeline. Returns snippets and a summary dict."""
    post_stats, block_stats, ref_stats = IngestStats(), IngestStats(), IngestStats()
    snippets, summary = build_corpus(
        ingest_posts(posts_path, post_stats), ingest_blocks(blocks_path, block_stats), tag_filter
    )
    snippets = select_versions(snippets, versions)
    if refs_path is not None:
        snippets = attach_github_refs(snippets, read_github_refs(refs_path, ref_stats))
    report = summary.to_dict()
    report.update(
        snippets=len(snippets),
        posts_skipped=post_stats.skipped,
        blocks_skipped=block_stats.skipped,
        refs_skipped=ref_stats.skipped,
    )
    logger.info("corpus built: %s", report)
    return snippets, report
