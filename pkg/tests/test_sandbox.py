import os
import signal
import sys
import time

import pytest

from snipex.sandbox import (
    _INHERITED_ENV,
    InterpreterConfig,
    RawExecution,
    SandboxEnvironmentError,
    child_env,
    load_configs,
    prepare_source,
    run_process,
    run_snippet,
)

from .conftest import MINI_DIR


def _alive(pid: int) -> bool:
    try:
        with open(f"/proc/{pid}/stat") as fh:
            state = fh.read().rsplit(")", 1)[1].split()[0]
    except FileNotFoundError:
        return False
    return state not in ("Z", "X")


def test_exit_status_propagates(py3_config):
    raw = run_snippet("import sys\nsys.exit(7)\n", py3_config)
    assert raw.exit_status == 7 and not raw.timed_out and raw.spawn_error is None


def test_signal_exit_maps_to_128_plus(py3_config):
    raw = run_snippet("import os, signal\nos.kill(os.getpid(), signal.SIGKILL)\n", py3_config)
    assert raw.exit_status == 128 + signal.SIGKILL


def test_streams_captured(py3_config):
    raw = run_snippet("import sys\nprint('out')\nsys.stderr.write('err')\n", py3_config)
    assert raw.stdout_tail == b"out\n" and raw.stderr_tail == b"err"


def test_stdin_is_closed(py3_config):
    raw = run_snippet("input()\n", py3_config)
    assert raw.exit_status == 1 and b"EOFError" in raw.stderr_tail


def test_background_children_are_killed(py3_config):
    src = (
        "import subprocess, sys\n"
        "p = subprocess.Popen([sys.executable, '-c', 'import time; time.sleep(60)'])\n"
        "print(p.pid)\n"
    )
    raw = run_snippet(src, py3_config)
    assert raw.exit_status == 0
    pid = int(raw.stdout_tail.strip())
    deadline = time.monotonic() + 5
    while _alive(pid) and time.monotonic() < deadline:
        time.sleep(0.05)
    assert not _alive(pid)


def test_timeout_kills_term_ignoring_group():
    src = (
        "import signal, subprocess, sys, time\n"
        "signal.signal(signal.SIGTERM, signal.SIG_IGN)\n"
        "p = subprocess.Popen([sys.executable, '-c', 'import signal, time; signal.signal(signal.SIGTERM, signal.SIG_IGN); time.sleep(60)'])\n"
        "print(p.pid, flush=True)\n"
        "while True: time.sleep(0.1)\n"
    )
    config = InterpreterConfig("py3", ("{python}", "{file}"), timeout=1.0)
    raw = run_snippet(src, config)
    assert raw.timed_out and raw.exit_status is None
    assert 1.0 <= raw.duration < 1.0 + 1.0 + 1.5
    pid = int(raw.stdout_tail.split()[0])
    time.sleep(0.2)
    assert not _alive(pid)


def test_output_tail_is_capped():
    config = InterpreterConfig("py3", ("{python}", "{file}"), max_output_bytes=1000)
    raw = run_snippet("import sys\nsys.stdout.write('a' * 200000 + 'END')\n", config)
    assert len(raw.stdout_tail) == 1000
    assert raw.stdout_tail.endswith(b"aEND")


def test_workdir_isolation_and_cleanup(tmp_path, py3_config, monkeypatch):
    monkeypatch.setenv("SNIPEX_TEST_SECRET", "hunter2")
    workdir = tmp_path / "wd"
    src = "import os\nprint(os.getcwd())\nprint(os.environ.get('HOME'))\nprint(os.environ.get('SNIPEX_TEST_SECRET'))\n"
    raw = run_snippet(src, py3_config, workdir)
    cwd, home, secret = raw.stdout_tail.decode().split()
    assert cwd == home == os.path.realpath(workdir)
    assert secret == "None"
    assert not workdir.exists()


def test_child_env_is_minimal(tmp_path):
    env = child_env(str(tmp_path), {"EXTRA": "1"})
    assert env["HOME"] == env["TMPDIR"] == str(tmp_path)
    assert env["PYTHONHASHSEED"] == "0" and env["EXTRA"] == "1"
    assert set(env) <= {*_INHERITED_ENV, "HOME", "TMPDIR", "PYTHONDONTWRITEBYTECODE", "PYTHONHASHSEED", "EXTRA"}
    assert "SNIPEX_TEST_SECRET" not in env


def test_spawn_error_for_missing_binary(tmp_path):
    config = InterpreterConfig("ghost", ("/nonexistent/python9", "{file}"))
    raw = run_snippet("x = 1\n", config)
    assert raw.spawn_error and raw.exit_status is None and not raw.timed_out


def test_unwritable_workdir_is_environment_error(tmp_path, py3_config):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(SandboxEnvironmentError):
        run_snippet("x = 1\n", py3_config, blocker / "sub")


@pytest.mark.parametrize(
    "kwargs",
    [
        {},
        {"exit_status": 0, "timed_out": True},
        {"exit_status": 0, "spawn_error": "x"},
        {"timed_out": True, "spawn_error": "x"},
    ],
)
def test_raw_execution_is_tri_state(kwargs):
    with pytest.raises(ValueError):
        RawExecution(**kwargs)


def test_raw_execution_round_trip():
    raw = RawExecution(exit_status=1, stdout_tail=b"\x00\xff", stderr_tail=b"err", duration=0.5)
    assert RawExecution.from_dict(raw.to_dict()) == raw


def test_run_process_direct(tmp_path):
    raw = run_process([sys.executable, "-c", "print(1)"], str(tmp_path), child_env(str(tmp_path)), 5.0)
    assert raw.exit_status == 0 and raw.stdout_tail == b"1\n"


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("x = 1 &lt; 2", "x = 1 < 2"),
        ("\ufeffprint(1)", "print(1)"),
        ("a = 1\r\nb = 2\r\n", "a = 1\nb = 2\n"),
        ("    a = 1\n    if a:\n        b = 2", "a = 1\nif a:\n    b = 2"),
        ("caf\xc3\xa9".encode("latin-1"), "café"),
        (b"bad \xff byte", "bad \ufffd byte"),
    ],
)
def test_prepare_source(raw, expected):
    assert prepare_source(raw) == expected


@pytest.mark.parametrize(
    "kwargs",
    [
        {"command": ("python",)},
        {"command": ("python", "{file}"), "timeout": 0},
        {"command": ("python", "{file}"), "max_output_bytes": 0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        InterpreterConfig("bad", **kwargs)


def test_config_file_loads():
    configs = load_configs(MINI_DIR / "configs.json")
    assert [c.id for c in configs] == ["py2", "py3"]
    assert all(c.timeout == 10.0 for c in configs)
    assert configs[0].argv("s.py")[-1] == "s.py"
    assert configs[0].installer_argv("requests")[-1] == "requests"
    assert InterpreterConfig.from_dict(configs[1].to_dict()) == configs[1]


def test_container_style_command_gets_workdir(tmp_path):
    # a container runtime would mount {workdir}; here a wrapper just checks it can see the script
    wrapper = (
        "import os, runpy, sys; wd, script = sys.argv[1], sys.argv[2]; "
        "assert os.path.dirname(script) == wd; runpy.run_path(script, run_name='__main__')"
    )
    config = InterpreterConfig("wrapped", ("{python}", "-c", wrapper, "{workdir}", "{file}"))
    raw = run_snippet("print('inside')\n", config)
    assert raw.exit_status == 0 and raw.stdout_tail == b"inside\n"
