import pytest

from snipex.classifier import classify, extract_missing_module
from snipex.sandbox import InterpreterConfig, prepare_source, run_snippet


@pytest.fixture(scope="module")
def py2():
    return InterpreterConfig("py2", ("{python}", "{py2shim}", "{file}"), timeout=10.0)


def _run(config, source):
    raw = run_snippet(prepare_source(source), config)
    return classify(raw).name, raw


@pytest.mark.parametrize(
    "source",
    [
        "print 'hi'",
        "print 'a', 1, None",
        "exec 'y = 2'",
        "d = {1: 2}\nassert d.has_key(1)",
        "x = 10L + 0777\nprint x",
        "import urllib2, StringIO, cPickle",
        "for k, v in {'a': 1}.iteritems():\n    print k, v",
        "s = u'caf\\xe9'\nprint s.encode('utf-8')",
        "try:\n    raise ValueError, 'old style'\nexcept ValueError, e:\n    print e",
        "print reduce(lambda a, b: a * b, xrange(1, 5))",
    ],
)
def test_python2_programs_run(py2, source):
    status, raw = _run(py2, source)
    assert status == "Success", raw.stderr_tail.decode()


@pytest.mark.parametrize(
    "source",
    [
        "x = f'{1}'",
        "def f(a: int) -> int:\n    return a",
        "def f():\n    nonlocal x",
        "async def f():\n    pass",
        "x = 1_000",
        "def f(*, a):\n    pass",
        "print('a', end='')",
        "first, *rest = [1, 2]",
        "if (n := 3):\n    pass",
    ],
)
def test_python3_only_syntax_is_rejected(py2, source):
    status, raw = _run(py2, source)
    assert status == "SyntaxError", raw.stderr_tail.decode()


def test_missing_module_uses_python2_message(py2):
    status, raw = _run(py2, "import not_installed_zz.sub")
    assert status == "ImportError"
    last = raw.stderr_tail.decode().strip().splitlines()[-1]
    assert last.startswith("ImportError: No module named not_installed_zz")
    assert extract_missing_module(raw.stderr_tail) == "not_installed_zz"


@pytest.mark.parametrize(
    "source, status",
    [
        ("open('absent.txt')", "IOError"),
        ("import os\nos.listdir('absent_dir')", "OSError"),
        ("def f():\n    return f()\nf()", "RuntimeError"),
        ("raw_input()", "EOFError"),
        ("if True:\nprint 1", "IndentationError"),
        ("x = 1\n  y = 2", "IndentationError"),
        ("class E(Exception):\n    pass\nraise E()", "UnknownError"),
    ],
)
def test_python2_exception_names(py2, source, status):
    assert _run(py2, source)[0] == status


def test_script_directory_on_path(py2, tmp_path):
    raw = run_snippet("import sys, os\nprint sys.path[0] == os.getcwd()\n", py2, tmp_path / "wd")
    assert raw.stdout_tail.strip() == b"True"
