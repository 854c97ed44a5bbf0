"""Regenerate the curated mini-corpus under src/snipex/data/mini/.

Each entry is (content, expected py2 status, expected py3 status). Expected
statuses are assigned by hand from the language semantics of each version,
with the resolver's installer unable to install anything.

    python tools/build_mini_corpus.py
"""

from __future__ import annotations

import csv
import html
import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "snipex" / "data" / "mini"

S = "Success"

SNIPPETS = [
    # cross-version print pair
    ("print 'Hello,World!'", S, "SyntaxError"),
    ("print('Hello,World!')", S, S),
    ("print 'sum:', sum(range(10))", S, "SyntaxError"),
    ('print "Total: %d" % 5', S, "SyntaxError"),
    ("for i in xrange(3):\n    print i", S, "SyntaxError"),
    ("print undefined_name", "NameError", "SyntaxError"),
    ("exec 'x = 1'", S, "SyntaxError"),
    ("x = 0777\nprint(x)", S, "SyntaxError"),
    ("try:\n    1/0\nexcept ZeroDivisionError, e:\n    print('caught')", S, "SyntaxError"),
    # python 3 only syntax
    ("value = 2\nprint(f'{value + 1}')", "SyntaxError", S),
    ("def add(a: int, b: int) -> int:\n    return a + b\n\nprint(add(1, 2))", "SyntaxError", S),
    ("async def main():\n    pass\n\nprint('defined')", "SyntaxError", S),
    (
        "def outer():\n    x = 1\n    def inner():\n        nonlocal x\n        x = 2\n    inner()\n    return x\n\nprint(outer())",
        "SyntaxError",
        S,
    ),
    ("print('a', end='')\nprint('b')", "SyntaxError", S),
    # library moves between versions
    ("import urllib2\nprint('ok')", S, "ModuleNotFoundError"),
    ("from StringIO import StringIO\nbuf = StringIO()\nbuf.write('x')\nprint(buf.getvalue())", S, "ModuleNotFoundError"),
    ("d = {'a': 1}\nif d.has_key('a'):\n    print('yes')", S, "AttributeError"),
    ("import itertools\npairs = itertools.izip([1, 2], [3, 4])\nprint(list(pairs))", S, "AttributeError"),
    ("total = reduce(lambda a, b: a + b, [1, 2, 3])\nprint(total)", S, "NameError"),
    # stdin is closed
    ("name = raw_input('Name: ')\nprint name", "EOFError", "SyntaxError"),
    ("name = input('Name: ')\nprint(name)", "EOFError", "EOFError"),
    ("x = raw_input()", "EOFError", "NameError"),
    ("x = input()", "EOFError", "EOFError"),
    # files and missing modules
    ("with open('data.txt') as f:\n    print(f.read())", "IOError", "FileNotFoundError"),
    ("import os\nos.remove('missing.txt')", "OSError", "FileNotFoundError"),
    ("import nonexistent_pkg_qq", "ImportError", "ModuleNotFoundError"),
    ("from zzqy_missing.sub import thing\nthing()", "ImportError", "ModuleNotFoundError"),
    # fragments and console sessions
    ("df.head()", "NameError", "NameError"),
    ("result = some_function(42)", "NameError", "NameError"),
    ("my_list.append(4)", "NameError", "NameError"),
    ("print(undefined_name)", "NameError", "NameError"),
    (">>> x = 5\n>>> x\n5", "SyntaxError", "SyntaxError"),
    ("$ pip install requests", "SyntaxError", "SyntaxError"),
    ("hello world", "SyntaxError", "SyntaxError"),
    ("if True:\nprint('x')", "IndentationError", "IndentationError"),
    ("  x = 1\ny = 2", "IndentationError", "IndentationError"),
    ("def f():\n    x = 1\n  return x", "IndentationError", "IndentationError"),
    # runtime errors common to both
    ("'a' + 1", "TypeError", "TypeError"),
    ("a = 5\nb = 'x'\nprint(a + b)", "TypeError", "TypeError"),
    ("len(5)", "TypeError", "TypeError"),
    ("int('abc')", "ValueError", "ValueError"),
    ("import math\nprint(math.sqrt(-1))", "ValueError", "ValueError"),
    ("x = [1, 2, 3]\nprint(x[5])", "IndexError", "IndexError"),
    ("config = {}\nport = config['port']", "KeyError", "KeyError"),
    ("ratio = 1 / 0", "ZeroDivisionError", "ZeroDivisionError"),
    ("value = None\nvalue.strip()", "AttributeError", "AttributeError"),
    ("assert 1 == 2, 'numbers differ'", "AssertionError", "AssertionError"),
    ("def todo():\n    raise NotImplementedError('later')\n\ntodo()", "NotImplementedError", "NotImplementedError"),
    ("def f(n):\n    return f(n + 1)\n\nf(0)", "RuntimeError", "RecursionError"),
    # harness statuses
    ("while True: pass", "Timeout", "Timeout"),
    ("import sys\nsys.exit(3)", "ExitCodeException", "ExitCodeException"),
    ("import os\nos._exit(4)", "ExitCodeException", "ExitCodeException"),
    ("class CustomError(Exception):\n    pass\n\nraise CustomError('boom')", "UnknownError", "UnknownError"),
    ("import sys\nsys.stderr.write('fatal problem\\n')\nsys.exit(2)", "UnknownError", "UnknownError"),
    # working programs
    ("x = 1 + 1\nprint(x)", S, S),
    ("for i in range(3):\n    print(i)", S, S),
    ("s = u'unicode'\nprint(s.upper())", S, S),
    ("import collections\nc = collections.Counter('hello')\nprint(c.most_common(1))", S, S),
    ("import os\nprint(os.path.join('a', 'b'))", S, S),
    ("nums = [1, 2, 3]\nsquares = [n * n for n in nums]\nprint(squares)", S, S),
    ("def greet(name):\n    return 'Hello ' + name\n\nprint(greet('world'))", S, S),
    (
        "class Point(object):\n    def __init__(self, x, y):\n        self.x = x\n        self.y = y\n\np = Point(1, 2)\nprint(p.x + p.y)",
        S,
        S,
    ),
    ("import json\ndata = json.loads('{\"a\": 1}')\nprint(data['a'])", S, S),
    ("x = 1 < 2\nprint(x)", S, S),  # stored entity-encoded in the dump
    ("    def f():\n        return 1\n    print(f())", S, S),  # uniformly indented
    ("import re\nm = re.match(r'(\\d+)', '42abc')\nprint(m.group(1))", S, S),
    ("words = ['b', 'a', 'c']\nwords.sort()\nprint(', '.join(words))", S, S),
    ("import datetime\nd = datetime.date(2015, 1, 1)\nprint(d.isoformat())", S, S),
    ("try:\n    int('x')\nexcept ValueError:\n    print('not a number')", S, S),
    ("import numpy as np\na = np.arange(4)\nprint(a.sum())", S, S),
    ("", S, S),
]

# metadata patterns
YEARS = list(range(2009, 2019))


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    posts = []
    blocks = []
    refs = []
    expected = {}
    for k, (content, py2, py3) in enumerate(SNIPPETS):
        qid, aid = 1000 + k, 2000 + k
        year = YEARS[k % len(YEARS)]
        accepted = k % 3 == 0
        posts.append([qid, 1, "", aid if accepted else "", f"{year}-03-01T10:00:00Z", 3, "<python>"])
        posts.append([aid, 2, qid, "", f"{year}-03-02T12:30:00Z", k % 7, ""])
        root = 5000 + 2 * k
        latest = root + 1
        encoded = html.escape(content, quote=False)
        if k % 5 == 0:
            # an earlier edit of the same block; only the latest version is evaluated
            blocks.append([root, aid, 2, root, 1, 21, "print 'old version'"])
            blocks.append([latest, aid, 2, root, 0, 0, encoded])
        else:
            blocks.append([latest, aid, 2, latest, 0, 0, encoded])
        blocks.append([7000 + k, aid, 1, 7000 + k, 1, 24, "Here is how you do it:"])
        if k % 4 == 0:
            refs.append([aid, f"https://github.com/example/repo{k}/blob/master/a.py"])
            refs.append([aid, f"https://github.com/example/repo{k}/blob/master/a.py"])
            if k % 8 == 0:
                refs.append([aid, f"https://github.com/other/fork{k}/blob/master/b.py"])
        expected[str(latest)] = {"py2": py2, "py3": py3}

    # composite tags, orphan answer and a damaged row: all excluded from the corpus
    posts.append([9000, 1, "", "", "2014-05-01T00:00:00Z", 1, "<python><numpy>"])
    posts.append([9001, 2, 9000, "", "2014-05-02T00:00:00Z", 1, ""])
    posts.append([9002, 2, 424242, "", "2014-05-02T00:00:00Z", 1, ""])
    posts.append(["not-a-number", 2, 9000, "", "2014-05-02T00:00:00Z", 1, ""])
    blocks.append([9100, 9001, 2, 9100, 1, 20, "import numpy as np"])
    blocks.append([9101, 9002, 2, 9101, 1, 8, "print(1)"])

    with open(OUT / "posts.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["Id", "PostTypeId", "ParentId", "AcceptedAnswerId", "CreationDate", "Score", "Tags"])
        w.writerows(posts)
    with open(OUT / "blocks.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["Id", "PostId", "PostBlockTypeId", "RootPostBlockVersionId", "LineCount", "Length", "Content"])
        w.writerows(blocks)
    with open(OUT / "refs.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["PostId", "Url"])
        w.writerows(refs)
    with open(OUT / "expected.json", "w", encoding="utf-8") as fh:
        json.dump(expected, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"{len(SNIPPETS)} snippets written to {OUT}")


if __name__ == "__main__":
    main()
