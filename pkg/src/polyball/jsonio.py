"""JSON loading with path-aware diagnostics and atomic report writing."""

from __future__ import annotations

import json
import os
import tempfile

__all__ = ["InputError", "load_json", "dump_report", "atomic_write_text"]


class InputError(Exception):
    """Malformed input file or field; maps to CLI exit code 2."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def load_json(path: str) -> object:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(path, "file not found") from None
    except json.JSONDecodeError as exc:
        raise InputError(path, f"malformed JSON at line {exc.lineno}: {exc.msg}") from None


def parse_with(path: str, parser, obj, what: str):
    """Run a ``from_json`` style parser, wrapping failures with the path."""
    try:
        return parser(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(path, f"invalid {what}: {exc}") from None


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".polyball-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def dump_report(envelope: dict, out: str | None) -> str:
    text = json.dumps(envelope, indent=2, sort_keys=True, allow_nan=True) + "\n"
    if out:
        atomic_write_text(out, text)
    return text
