"""CSV instance files.

Instance: header ``y,x1,...,xd`` then one row per sample.  Truth sidecar:
header ``beta_star,eta``; the first column holds d values, the second n,
and the shorter column is padded with empty cells.  Reals are written with
17 significant digits so they read back bit for bit.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .errors import InvalidArgument
from .model import RegressionInstance, Truth


def fmt(x: float) -> str:
    return "%.17g" % x


def instance_to_csv(inst: RegressionInstance) -> str:
    buf = io.StringIO()
    buf.write(",".join(["y"] + [f"x{j + 1}" for j in range(inst.d)]) + "\n")
    for yi, row in zip(inst.y, inst.X):
        buf.write(",".join([fmt(yi)] + [fmt(v) for v in row]) + "\n")
    return buf.getvalue()


def truth_to_csv(truth: Truth) -> str:
    b, e = truth.beta_star, truth.eta
    lines = ["beta_star,eta"]
    for i in range(max(b.size, e.size)):
        left = fmt(b[i]) if i < b.size else ""
        right = fmt(e[i]) if i < e.size else ""
        lines.append(f"{left},{right}")
    return "\n".join(lines) + "\n"


def _rows(text: str) -> list[list[str]]:
    return [r for r in csv.reader(io.StringIO(text)) if r]


def _float(cell: str, where: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise InvalidArgument(f"{where}: not a number: {cell!r}") from None


def instance_from_csv(text: str, truth_text: str | None = None) -> RegressionInstance:
    rows = _rows(text)
    if not rows:
        raise InvalidArgument("instance file is empty")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    expected = ["y"] + [f"x{j + 1}" for j in range(d)]
    if d < 1 or header != expected:
        raise InvalidArgument(f"bad header {','.join(header)!r}; expected y,x1,...,xd")
    if len(rows) < 2:
        raise InvalidArgument("instance file has no data rows")
    data = np.empty((len(rows) - 1, d + 1))
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != d + 1:
            raise InvalidArgument(f"line {i}: expected {d + 1} fields, got {len(r)}")
        data[i - 2] = [_float(c, f"line {i}") for c in r]
    truth = None
    if truth_text is not None:
        truth = truth_from_csv(truth_text, n=data.shape[0], d=d)
    return RegressionInstance(data[:, 1:], data[:, 0], truth)


def truth_from_csv(text: str, n: int, d: int) -> Truth:
    rows = _rows(text)
    if not rows or [h.strip() for h in rows[0]] != ["beta_star", "eta"]:
        raise InvalidArgument("truth file must start with header beta_star,eta")
    beta, eta = [], []
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != 2:
            raise InvalidArgument(f"truth line {i}: expected 2 fields")
        if r[0].strip():
            beta.append(_float(r[0], f"truth line {i}"))
        if r[1].strip():
            eta.append(_float(r[1], f"truth line {i}"))
    if len(beta) != d or len(eta) != n:
        raise InvalidArgument(f"truth file has {len(beta)} beta_star and {len(eta)} eta values; "
                              f"expected {d} and {n}")
    return Truth(np.array(beta), np.array(eta))
