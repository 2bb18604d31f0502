"""
Plain-text model records.

Fitted ARIMA models, trained networks, strategies and hybrids are all
stored in one line-oriented format::

    [arima]
    order = 1 0 0
    ar = 0.5
    intercept = 0.0

A ``[kind]`` header opens a section; each following ``key = value`` line
belongs to it. Vectors are space-separated floats written with the
shortest representation that round-trips exactly. Lines starting with
``#`` are comments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import ParseError


@dataclass
class Record:
    """
    One section of a record file.

    Attributes:
        kind: Section name (``arima``, ``network``, ``strategy``...)
        fields: Raw string values keyed by field name, in insertion order
    """

    kind: str
    fields: dict[str, str] = field(default_factory=dict)

    def set(self, key: str, value: object) -> Record:
        """Store a scalar, a string, or a vector (as space-separated floats)."""
        if isinstance(value, str):
            self.fields[key] = value
        elif isinstance(value, (list, tuple, np.ndarray)):
            self.fields[key] = format_floats(value)
        elif isinstance(value, float):
            self.fields[key] = repr(float(value))
        else:
            self.fields[key] = str(value)
        return self

    def get(self, key: str) -> str:
        try:
            return self.fields[key]
        except KeyError:
            raise ParseError(f"[{self.kind}] record has no field {key!r}") from None

    def get_float(self, key: str) -> float:
        return float(self.get(key))

    def get_int(self, key: str) -> int:
        return int(self.get(key))

    def get_floats(self, key: str) -> NDArray[np.float64]:
        return parse_floats(self.get(key))

    def get_ints(self, key: str) -> list[int]:
        return [int(tok) for tok in self.get(key).split()]


def format_floats(values: ArrayLike) -> str:
    """
    Serialize numbers to a space-separated string.

    Example:
        >>> format_floats([0.1, 2.0])
        '0.1 2.0'
    """
    return " ".join(repr(float(v)) for v in np.asarray(values, dtype=np.float64).ravel())


def parse_floats(text: str) -> NDArray[np.float64]:
    """Inverse of :func:`format_floats`; an empty string gives an empty array."""
    tokens = text.split()
    return np.array([float(tok) for tok in tokens], dtype=np.float64)


def records_to_string(records: Iterable[Record]) -> str:
    """
    Serialize records to the sectioned text format.

    Returns:
        Newline-delimited text, one blank line between sections
    """
    blocks = []
    for record in records:
        lines = [f"[{record.kind}]"]
        lines.extend(f"{key} = {value}".rstrip() for key, value in record.fields.items())
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n" if blocks else ""


def string_to_records(text: str) -> list[Record]:
    """
    Parse the sectioned text format.

    Raises:
        ParseError: a field line appears before any header, or lacks ``=``
    """
    records: list[Record] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            records.append(Record(line[1:-1].strip()))
            continue
        if not records:
            raise ParseError("field outside of any [section]", line=number)
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"expected 'key = value', got {line!r}", line=number)
        records[-1].fields[key.strip()] = value.strip()
    return records


def write_records(records: Iterable[Record], path: Union[str, Path]) -> None:
    Path(path).write_text(records_to_string(records), encoding="utf-8")


def read_records(path: Union[str, Path]) -> list[Record]:
    return string_to_records(Path(path).read_text(encoding="utf-8"))
