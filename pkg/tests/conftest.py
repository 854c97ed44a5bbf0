from __future__ import annotations

import csv
import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest

from snipex.corpus import BLOCKS_HEADER, POSTS_HEADER, Snippet
from snipex.sandbox import InterpreterConfig, load_configs

MINI_DIR = Path(__file__).resolve().parent.parent / "src" / "snipex" / "data" / "mini"


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def make_snippet(snippet_id: int, content: str = "x = 1\n", **kw) -> Snippet:
    fields = dict(
        post_id=snippet_id + 100000,
        root_block_version_id=snippet_id,
        content=content,
        line_count=max(1, content.count("\n")),
        answer_score=0,
        is_accepted=False,
        created_at=datetime(2015, 6, 1, tzinfo=timezone.utc),
    )
    fields.update(kw)
    return Snippet(snippet_id=snippet_id, **fields)


def fail_installer() -> tuple[str, ...]:
    return (sys.executable, "-c", "import sys; sys.exit(1)", "{module}")


@pytest.fixture
def py3_config() -> InterpreterConfig:
    return InterpreterConfig("py3", ("{python}", "{file}"), fail_installer(), timeout=5.0)


@pytest.fixture
def fast_configs() -> list[InterpreterConfig]:
    return [
        InterpreterConfig("py2", ("{python}", "{py2shim}", "{file}"), fail_installer(), timeout=5.0),
        InterpreterConfig("py3", ("{python}", "{file}"), fail_installer(), timeout=5.0),
    ]


@pytest.fixture
def mini_configs() -> list[InterpreterConfig]:
    return load_configs(MINI_DIR / "configs.json")


@pytest.fixture
def dumps(tmp_path):
    """A tiny posts/blocks pair exercising the join and filter rules."""
    posts = write_csv(
        tmp_path / "posts.csv",
        POSTS_HEADER,
        [
            [1, 1, "", 11, "2012-01-01T00:00:00Z", 5, "<python>"],
            [11, 2, 1, "", "2012-01-02T08:00:00Z", 7, ""],
            [12, 2, 1, "", "2013-02-02T08:00:00Z", 1, ""],
            [2, 1, "", "", "2012-01-01T00:00:00Z", 5, "<python><pandas>"],
            [21, 2, 2, "", "2012-01-02T00:00:00Z", 1, ""],
            [31, 2, 999, "", "2012-01-02T00:00:00Z", 1, ""],
        ],
    )
    blocks = write_csv(
        tmp_path / "blocks.csv",
        BLOCKS_HEADER,
        [
            [100, 11, 2, 100, 1, 9, "print 'a'"],
            [101, 11, 2, 100, 1, 10, "print('a')"],
            [102, 11, 1, 102, 1, 4, "text"],
            [103, 12, 2, 103, 2, 20, "import os.path\nimport numpy as np"],
            [200, 21, 2, 200, 1, 5, "x = 1"],
            [300, 31, 2, 300, 1, 5, "y = 2"],
        ],
    )
    return posts, blocks




# acceptance criteria outcomes, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
