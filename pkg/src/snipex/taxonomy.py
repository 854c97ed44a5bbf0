"""The fixed status-code table every execution is classified into.

Ids are frozen per ``TAXONOMY_VERSION``; append-only changes bump the version.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

TAXONOMY_VERSION = "snipex-taxonomy/1"


class Category(str, enum.Enum):
    SUCCESS = "success"
    INTERPRETER_ERROR = "interpreter_error"
    HARNESS = "harness"


@dataclass(frozen=True)
class StatusCode:
    name: str
    numeric_id: int
    category: Category

    @property
    def is_success(self) -> bool:
        return self.numeric_id == 0

    def to_dict(self) -> dict:
        return {"name": self.name, "numeric_id": self.numeric_id, "category": self.category.value}


# Built-in exception classes of Python 2.7 and 3.7 that can terminate a
# script. BaseException, GeneratorExit and StopAsyncIteration are left out:
# none of them reaches the top level of a plain script in practice.
_INTERPRETER_ERRORS = (
    "SyntaxError",
    "NameError",
    "IndentationError",
    "ImportError",
    "ModuleNotFoundError",
    "EOFError",
    "FileNotFoundError",
    "TypeError",
    "ValueError",
    "AttributeError",
    "KeyError",
    "IndexError",
    "ZeroDivisionError",
    "RuntimeError",
    "OSError",
    "IOError",
    "MemoryError",
    "RecursionError",
    "KeyboardInterrupt",
    "SystemExit",
    "ArithmeticError",
    "AssertionError",
    "BlockingIOError",
    "BrokenPipeError",
    "BufferError",
    "ChildProcessError",
    "ConnectionAbortedError",
    "ConnectionError",
    "ConnectionRefusedError",
    "ConnectionResetError",
    "EnvironmentError",
    "Exception",
    "FileExistsError",
    "FloatingPointError",
    "InterruptedError",
    "IsADirectoryError",
    "LookupError",
    "NotADirectoryError",
    "NotImplementedError",
    "OverflowError",
    "PermissionError",
    "ProcessLookupError",
    "ReferenceError",
    "StandardError",
    "StopIteration",
    "SystemError",
    "TabError",
    "TimeoutError",
    "UnboundLocalError",
    "UnicodeDecodeError",
    "UnicodeEncodeError",
    "UnicodeError",
    "UnicodeTranslateError",
)

_HARNESS = ("ExitCodeException", "Timeout", "SpawnError", "UnknownError")


def _build() -> tuple[StatusCode, ...]:
    codes = [StatusCode("Success", 0, Category.SUCCESS)]
    for name in _INTERPRETER_ERRORS:
        codes.append(StatusCode(name, len(codes), Category.INTERPRETER_ERROR))
    for name in _HARNESS:
        codes.append(StatusCode(name, len(codes), Category.HARNESS))
    return tuple(codes)


TAXONOMY: tuple[StatusCode, ...] = _build()
_BY_NAME = {c.name: c for c in TAXONOMY}
_BY_ID = {c.numeric_id: c for c in TAXONOMY}

SUCCESS = _BY_NAME["Success"]
TIMEOUT = _BY_NAME["Timeout"]
SPAWN_ERROR = _BY_NAME["SpawnError"]
EXIT_CODE_EXCEPTION = _BY_NAME["ExitCodeException"]
UNKNOWN_ERROR = _BY_NAME["UnknownError"]
IMPORT_FAILURES = frozenset({"ImportError", "ModuleNotFoundError"})


def lookup(name: str) -> StatusCode:
    """Status code by name; names outside the table map to UnknownError."""
    return _BY_NAME.get(name, UNKNOWN_ERROR)


def by_id(numeric_id: int) -> StatusCode:
    return _BY_ID[numeric_id]


def is_interpreter_error(name: str) -> bool:
    code = _BY_NAME.get(name)
    return code is not None and code.category is Category.INTERPRETER_ERROR


def taxonomy_table() -> dict:
    return {"version": TAXONOMY_VERSION, "codes": [c.to_dict() for c in TAXONOMY]}


def taxonomy_json() -> str:
    return json.dumps(taxonomy_table(), indent=2)
