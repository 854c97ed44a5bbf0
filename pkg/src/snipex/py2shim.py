"""Run a Python 2 script under a Python 3 interpreter.

Used as the py2 interpreter command when no real Python 2 is installed::

    python3 py2shim.py snippet.py

The script is parsed with the Python 2 grammar (print statement, exec
statement, backticks, ...), constructs that Python 2 rejects are reported as
SyntaxError, the tree is translated with the 2to3 fixers and the result is
executed. Uncaught exceptions are reported with Python 2 names and message
forms (``ImportError: No module named x``, ``IOError`` for missing files).

Only the standard library is imported here: this file runs as a standalone
script inside the sandbox.
"""

import os
import re
import sys
import traceback
import types
import warnings

_CODING_RE = re.compile(rb"^[ \t\f]*#.*?coding[:=][ \t]*([-\w.]+)")


class Py2SyntaxError(Exception):
    def __init__(self, kind, msg, lineno=None, text=None):
        super().__init__(msg)
        self.kind = kind
        self.msg = msg
        self.lineno = lineno
        self.text = text


def _report_syntax(path, err):
    lines = []
    if err.lineno:
        lines.append('  File "%s", line %d' % (path, err.lineno))
        if err.text:
            lines.append("    " + err.text.strip())
    lines.append("%s: %s" % (err.kind, err.msg))
    sys.stderr.write("\n".join(lines) + "\n")
    sys.stderr.flush()
    os._exit(1)


def _decode(path, data):
    head = data.split(b"\n", 2)[:2]
    encoding = None
    for line in head:
        m = _CODING_RE.match(line)
        if m:
            encoding = m.group(1).decode("ascii")
            break
    if encoding is None:
        for lineno, line in enumerate(data.split(b"\n"), 1):
            bad = next((b for b in line if b > 0x7F), None)
            if bad is not None:
                raise Py2SyntaxError(
                    "SyntaxError",
                    "Non-ASCII character '\\x%02x' in file %s on line %d, but no encoding declared; "
                    "see http://python.org/dev/peps/pep-0263/ for details" % (bad, path, lineno),
                )
        encoding = "ascii"
    try:
        return data.decode(encoding)
    except (LookupError, UnicodeDecodeError) as e:
        raise Py2SyntaxError("SyntaxError", "encoding problem: %s" % e)


def _expand_leading_tabs(text):
    out = []
    for line in text.split("\n"):
        stripped = line.lstrip(" \t")
        indent = line[: len(line) - len(stripped)]
        out.append(indent.expandtabs(8) + stripped)
    return "\n".join(out)


def _line(text, lineno):
    lines = text.split("\n")
    if lineno and 0 < lineno <= len(lines):
        return lines[lineno - 1]
    return None


def _py3_only(tree):
    """Line number of the first construct Python 2 cannot parse, or None."""
    from lib2to3 import pygram, pytree
    from lib2to3.pgen2 import token

    syms = pygram.python_symbols
    for node in tree.pre_order():
        if isinstance(node, pytree.Leaf):
            if node.type == token.STRING:
                prefix = re.match(r"[A-Za-z]*", node.value).group(0).lower()
                if "f" in prefix or prefix.startswith("rb"):
                    return node.lineno
            elif node.type == token.NUMBER and "_" in node.value:
                return node.lineno
            elif node.type in (token.ATEQUAL, token.ASYNC, token.AWAIT):
                return node.lineno
            elif node.type == token.NAME and node.value == "nonlocal" and node.parent.type == syms.global_stmt:
                return node.lineno
            elif node.type == token.AT and node.parent.type != syms.decorator:
                return node.lineno
            elif node.type == token.RARROW:
                return node.lineno
            elif node.type == token.NAME and node.value == "from" and node.parent.type in (
                syms.raise_stmt,
                syms.yield_arg,
            ):
                return node.lineno
            elif node.type == token.STAR and node.parent.type in (syms.typedargslist, syms.varargslist, syms.parameters):
                nxt = node.next_sibling
                if nxt is None or (isinstance(nxt, pytree.Leaf) and nxt.type in (token.COMMA, token.RPAR)):
                    return node.lineno
        elif node.type in (syms.tname, syms.star_expr, syms.namedexpr_test, syms.async_stmt, syms.async_funcdef):
            return node.get_lineno()
    return None


def _indentation_error(text, lineno, kind_hint):
    """Decide whether a parse failure at ``lineno`` is an indentation problem."""
    if kind_hint == "INDENT":
        return "unexpected indent"
    line = _line(text, lineno)
    if line is None:
        return None
    indent = len(line) - len(line.lstrip())
    for prev in reversed(text.split("\n")[: lineno - 1]):
        body = prev.split("#", 1)[0].rstrip()
        if not body:
            continue
        prev_indent = len(prev) - len(prev.lstrip())
        if body.endswith(":") and indent <= prev_indent:
            return "expected an indented block"
        return None
    return None


def translate(path, data):
    """Parse ``data`` as Python 2 and return equivalent Python 3 source."""
    from lib2to3.pgen2 import parse as pgen_parse
    from lib2to3.pgen2 import token, tokenize
    from lib2to3.refactor import RefactoringTool, get_fixers_from_package

    text = _expand_leading_tabs(_decode(path, data))
    if not text.endswith("\n"):
        text += "\n"
    tool = RefactoringTool(get_fixers_from_package("lib2to3.fixes"))
    try:
        tree = tool.refactor_string(text, path)
    except pgen_parse.ParseError as e:
        lineno = e.context[1][0] if e.context else None
        reason = _indentation_error(text, lineno, token.tok_name.get(e.type))
        if reason:
            raise Py2SyntaxError("IndentationError", reason, lineno, _line(text, lineno))
        raise Py2SyntaxError("SyntaxError", "invalid syntax", lineno, _line(text, lineno))
    except IndentationError as e:
        raise Py2SyntaxError("IndentationError", e.args[0], e.args[1][1] if len(e.args) > 1 else None)
    except tokenize.TokenError as e:
        lineno = e.args[1][0] if len(e.args) > 1 else None
        msg = "EOF while scanning triple-quoted string literal" if "string" in e.args[0] else "unexpected EOF while parsing"
        raise Py2SyntaxError("SyntaxError", msg, lineno)
    if tree is None:
        raise Py2SyntaxError("SyntaxError", "invalid syntax")
    lineno = _py3_only(tree)
    if lineno is not None:
        raise Py2SyntaxError("SyntaxError", "invalid syntax", lineno, _line(text, lineno))
    return str(tree)


_NAME_MAP = {
    "RecursionError": "RuntimeError",
    "FileNotFoundError": "OSError",
    "PermissionError": "OSError",
    "IsADirectoryError": "OSError",
    "NotADirectoryError": "OSError",
    "FileExistsError": "OSError",
    "BlockingIOError": "IOError",
    "ChildProcessError": "OSError",
    "ProcessLookupError": "OSError",
    "InterruptedError": "OSError",
    "ConnectionError": "socket.error",
    "BrokenPipeError": "socket.error",
    "ConnectionAbortedError": "socket.error",
    "ConnectionRefusedError": "socket.error",
    "ConnectionResetError": "socket.error",
    "TimeoutError": "socket.timeout",
}


_OPEN_CALL_RE = re.compile(r"\b(open|file)\s*\(")


def _raised_by_open(exc):
    tb = exc.__traceback__
    frames = traceback.extract_tb(tb) if tb is not None else []
    return bool(frames) and bool(_OPEN_CALL_RE.search(frames[-1].line or ""))


def py2_exception_line(exc):
    cls = type(exc)
    name = cls.__name__
    if cls.__module__ not in ("builtins", "__main__"):
        name = "%s.%s" % (cls.__module__, name)
    msg = str(exc)
    if isinstance(exc, ModuleNotFoundError):
        name = "ImportError"
        missing = exc.name or re.sub(r"^No module named '?|'$", "", msg)
        msg = "No module named %s" % missing
    elif isinstance(exc, ImportError) and msg.startswith("cannot import name"):
        m = re.match(r"cannot import name '?(\w+)'?", msg)
        msg = "cannot import name %s" % (m.group(1) if m else "")
    elif isinstance(exc, RecursionError):
        msg = "maximum recursion depth exceeded"
    if cls.__module__ == "builtins":
        name = _NAME_MAP.get(cls.__name__, name)
        # Python 2 raised IOError from open() and OSError from the os module
        if isinstance(exc, OSError) and name == "OSError" and _raised_by_open(exc):
            name = "IOError"
    return "%s: %s" % (name, msg) if msg else name


def _excepthook(etype, exc, tb):
    frames = [f for f in traceback.extract_tb(tb) if os.path.abspath(f.filename) != os.path.abspath(__file__)]
    out = ["Traceback (most recent call last):\n"]
    out.extend(traceback.format_list(frames))
    out.append(py2_exception_line(exc) + "\n")
    sys.stderr.write("".join(out))
    sys.stderr.flush()


def main(argv):
    if len(argv) < 2:
        sys.stderr.write("usage: py2shim.py script.py [args...]\n")
        return 2
    path = argv[1]
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            source = translate(path, data)
            code = compile(source, path, "exec", dont_inherit=True)
    except Py2SyntaxError as e:
        _report_syntax(path, e)
    except SyntaxError as e:
        kind = "IndentationError" if isinstance(e, IndentationError) else "SyntaxError"
        _report_syntax(path, Py2SyntaxError(kind, e.msg, e.lineno, e.text))

    for mod in [m for m in sys.modules if m.startswith("lib2to3")]:
        del sys.modules[mod]

    sys.argv = argv[1:]
    sys.path[0] = os.path.dirname(os.path.abspath(path))
    main_mod = types.ModuleType("__main__")
    main_mod.__file__ = path
    main_mod.__builtins__ = __builtins__
    sys.modules["__main__"] = main_mod
    sys.excepthook = _excepthook
    exec(code, main_mod.__dict__)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
