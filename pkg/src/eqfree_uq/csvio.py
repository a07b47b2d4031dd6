"""CSV writing with fixed 17-significant-digit floats and a provenance line."""
from __future__ import annotations

import io
import math

__all__ = ["fmt", "header_comment", "to_csv", "read_csv"]

COMPONENTS = ("A", "B", "star")


def fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool,)):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    return "%.17g" % value


def header_comment(version: str, command: str, seed: int, config_hash: str) -> str:
    return f"# eqfree-uq {version} command={command} seed={seed} config_sha256={config_hash}"


def to_csv(comment: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(comment + "\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def read_csv(text: str) -> tuple[list[str], list[str], list[list[str]]]:
    """Split CSV text into ``(comments, columns, rows)``; values stay strings."""
    comments, body = [], []
    for line in text.splitlines():
        (comments if line.startswith("#") else body).append(line)
    if not body:
        return comments, [], []
    return comments, body[0].split(","), [ln.split(",") for ln in body[1:] if ln]
