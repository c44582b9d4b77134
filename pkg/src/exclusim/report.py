"""Uniform verification records and their text / CSV renderings."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
import io
from typing import Iterable


@dataclass(frozen=True)
class Record:
    """One check: observed ``value`` against ``reference`` within ``tolerance``."""

    test: str
    quantity: str
    value: float
    reference: float
    tolerance: float
    passed: bool
    params: str = ""


COLUMNS = [f.name for f in fields(Record)]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "pass" if v else "FAIL"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(records: Iterable[Record]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        writer.writerow([_fmt(v) for v in astuple(r)])
    return buf.getvalue()


def to_text(records: Iterable[Record]) -> str:
    lines = []
    for r in records:
        where = f" [{r.params}]" if r.params else ""
        lines.append(f"{_fmt(r.passed):4}  {r.test}: {r.quantity}{where} = {r.value:.6g}"
                     f" (reference {r.reference:.6g}, tolerance {r.tolerance:.3g})")
    return "\n".join(lines) + ("\n" if lines else "")


def all_passed(records: Iterable[Record]) -> bool:
    return all(r.passed for r in records)
