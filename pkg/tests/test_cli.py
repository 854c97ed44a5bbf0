import json

import pytest
from click.testing import CliRunner

from snipex.cli import main
from snipex.corpus import BLOCKS_HEADER, POSTS_HEADER, write_corpus

from .conftest import MINI_DIR, make_snippet, write_csv


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def configs_file(tmp_path, fast_configs):
    path = tmp_path / "configs.json"
    path.write_text(json.dumps([c.to_dict() for c in fast_configs]))
    return path


def test_ingest_empty_dumps(runner, tmp_path):
    posts = write_csv(tmp_path / "p.csv", POSTS_HEADER, [])
    blocks = write_csv(tmp_path / "b.csv", BLOCKS_HEADER, [])
    out = tmp_path / "corpus.jsonl"
    res = runner.invoke(main, ["ingest", "--posts", str(posts), "--blocks", str(blocks), "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["snippets"] == 0
    assert out.read_text() == ""


def test_ingest_reports_missing_column(runner, tmp_path):
    posts = write_csv(tmp_path / "p.csv", POSTS_HEADER[:-1], [])
    blocks = write_csv(tmp_path / "b.csv", BLOCKS_HEADER, [])
    res = runner.invoke(main, ["ingest", "--posts", str(posts), "--blocks", str(blocks), "--out", str(tmp_path / "c")])
    assert res.exit_code != 0 and "Tags" in res.output


def test_ingest_and_top_imports_on_mini(runner, tmp_path):
    out = tmp_path / "corpus.jsonl"
    args = ["ingest", "--posts", str(MINI_DIR / "posts.csv"), "--blocks", str(MINI_DIR / "blocks.csv")]
    res = runner.invoke(main, [*args, "--refs", str(MINI_DIR / "refs.csv"), "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["snippets"] == 71
    res = runner.invoke(main, ["top-imports", "--corpus", str(out), "-n", "2"])
    assert res.output.splitlines() == ["os\t3", "sys\t2"]
    res = runner.invoke(main, ["top-imports", "--corpus", str(out)], env={"SNIPEX_TOP_IMPORTS_TOP": "1"})
    assert res.output.splitlines() == ["os\t3"]


def test_export_taxonomy(runner):
    res = runner.invoke(main, ["export-taxonomy"])
    table = json.loads(res.output)
    assert table["version"] == "snipex-taxonomy/1" and len(table["codes"]) == 58


def test_run_local_then_analyze(runner, tmp_path, configs_file):
    corpus = tmp_path / "corpus.jsonl"
    write_corpus(
        [
            make_snippet(1, "print 'x'\n", is_accepted=True, github_ref_count=1),
            make_snippet(2, "print('x')\n", line_count=1),
            make_snippet(3, "x = undefined\n", created_at=make_snippet(0).created_at.replace(year=2012)),
            make_snippet(4, "import sys\nsys.exit(2)\n", line_count=2, is_accepted=True),
        ],
        corpus,
    )
    results = tmp_path / "results.jsonl"
    store = tmp_path / "jobs.db"
    res = runner.invoke(
        main,
        ["run-local", "--corpus", str(corpus), "--configs", str(configs_file), "--out", str(results), "--store", str(store)],
    )
    assert res.exit_code == 0, res.output
    stats = json.loads(res.output)
    assert stats["done"] == 4 and stats["outcomes_written"] == 8

    res = runner.invoke(main, ["analyze", "--results", str(results), "--report", "table2"])
    assert res.exit_code == 0, res.output
    assert "py2 success rate: 50.00%" in res.output
    assert "py3 success rate: 25.00%" in res.output

    res = runner.invoke(main, ["analyze", "--results", str(results), "--report", "table1"])
    assert "ExitCodeException" in res.output and "N/A" in res.output

    res = runner.invoke(main, ["analyze", "--results", str(results), "--report", "linecount"])
    assert res.output.splitlines()[0] == "line_count,percent,population,pooled"

    res = runner.invoke(main, ["analyze", "--results", str(results), "--report", "trend"])
    assert res.exit_code == 0 and "overall" in res.output

    res = runner.invoke(main, ["analyze", "--results", str(results), "--report", "groups", "--iterations", "200"])
    assert res.exit_code == 0 and "accepted_vs_not" in res.output

    res = runner.invoke(main, ["analyze", "--results", str(results), "--corpus", str(corpus), "--iterations", "200"])
    report = json.loads(res.output)
    assert report["truth_table"]["both"] == 1 and report["snippets"] == 4
    assert report["reference_values"]["overall_success_rate"] == 27.92

    exported = tmp_path / "exported.jsonl"
    res = runner.invoke(main, ["export-results", "--store", str(store), "--out", str(exported)])
    assert json.loads(res.output)["outcomes_written"] == 8
    assert exported.read_text() == results.read_text()


def test_analyze_errors(runner, tmp_path):
    res = runner.invoke(main, ["analyze", "--results", str(tmp_path / "missing.jsonl")])
    assert res.exit_code != 0 and "not found" in res.output
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert runner.invoke(main, ["analyze", "--results", str(empty)]).exit_code != 0
    one = tmp_path / "one.jsonl"
    one.write_text(json.dumps({"snippet_id": 1, "interpreter_id": "py3", "final_status": "Success"}) + "\n")
    res = runner.invoke(main, ["analyze", "--results", str(one), "--report", "table2"])
    assert res.exit_code != 0 and "empty" in res.output
    res = runner.invoke(main, ["analyze", "--results", str(one), "--pair", "py3"])
    assert res.exit_code != 0


def test_export_results_needs_store(runner, tmp_path):
    res = runner.invoke(main, ["export-results", "--store", str(tmp_path / "none.db"), "--out", str(tmp_path / "o")])
    assert res.exit_code != 0


def test_work_rejects_broken_interpreter(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps([{"id": "py3", "command": ["/nonexistent/python", "{file}"]}]))
    res = runner.invoke(main, ["work", "--api", "http://127.0.0.1:9", "--configs", str(bad)])
    assert res.exit_code != 0 and "self-test" in res.output


def _paper_results(path, table):
    sid = 0
    with open(path, "w") as fh:
        for first, second, count in table:
            for _ in range(count):
                for iid, ok in (("py2", first), ("py3", second)):
                    status = "Success" if ok else "SyntaxError"
                    fh.write(f'{{"snippet_id": {sid}, "interpreter_id": "{iid}", "final_status": "{status}"}}\n')
                sid += 1


@pytest.mark.slow
def test_table2_on_published_counts(runner, tmp_path):
    results = tmp_path / "paper.jsonl"
    _paper_results(results, [(True, True, 55960), (True, False, 13633), (False, True, 5729), (False, False, 194462)])
    res = runner.invoke(main, ["analyze", "--results", str(results), "--report", "table2"])
    assert res.exit_code == 0, res.output
    assert "overall (either) success rate: 27.92%" in res.output
    assert "success in both: 20.74%" in res.output
    assert "55960" in res.output and "194462" in res.output
