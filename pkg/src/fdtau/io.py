"""CSV readers and writers for dense and long-format functional data.

Dense files are wide: the first row holds the grid times and every further
row is one curve. Responses for dense data sit in a single-column file in
the same row order (an optional text header is skipped). Sparse data is
long-format ``subject_id,time,value`` with responses keyed by
``subject_id,response``; subjects are joined by id and ordered by id, so the
row order of either file does not matter.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

from .domain import DenseSample, SparseSample, ValidationError, validate_dense, validate_sparse

FLOAT_FORMAT = "%.17g"


def _rows(path) -> List[List[str]]:
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]


def _floats(row, where: str) -> List[float]:
    try:
        return [float(c) for c in row]
    except ValueError as exc:
        raise ValidationError(f"{where}: non-numeric entry") from exc


def _is_numeric(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_dense(curves_path, responses_path) -> DenseSample:
    rows = _rows(curves_path)
    if len(rows) < 2:
        raise ValidationError(f"{curves_path}: need a grid row and at least one curve")
    grid = _floats(rows[0], f"{curves_path} grid row")
    width = len(grid)
    curves = []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ValidationError("non-rectangular input")
        curves.append(_floats(row, f"{curves_path} row {k}"))
    resp = _rows(responses_path)
    if resp and not _is_numeric(resp[0][0]):
        resp = resp[1:]
    if any(len(r) != 1 for r in resp):
        raise ValidationError(f"{responses_path}: expected a single column")
    y = [v[0] for v in (_floats(r, str(responses_path)) for r in resp)]
    return validate_dense(curves, y, grid)


def write_dense(sample: DenseSample, curves_path, responses_path) -> None:
    """Export ``sample`` so that :func:`read_dense` returns an equal value."""
    with open(curves_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([FLOAT_FORMAT % v for v in sample.grid.points])
        for row in sample.curves:
            w.writerow([FLOAT_FORMAT % v for v in row])
    with open(responses_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["response"])
        for v in sample.responses:
            w.writerow([FLOAT_FORMAT % v])


def _header(rows, expected: Tuple[str, ...], path) -> List[List[str]]:
    if not rows:
        raise ValidationError(f"{path}: empty file")
    head = tuple(c.strip().lower() for c in rows[0])
    if head != expected:
        raise ValidationError(f"{path}: header must be {','.join(expected)}")
    return rows[1:]


def _id_order(ids):
    if all(_is_numeric(i) for i in ids):
        return sorted(ids, key=lambda i: (float(i), i))
    return sorted(ids)


def read_sparse(long_path, responses_path) -> SparseSample:
    obs = _header(_rows(long_path), ("subject_id", "time", "value"), long_path)
    by_id: Dict[str, Tuple[list, list]] = defaultdict(lambda: ([], []))
    for k, row in enumerate(obs, start=2):
        if len(row) != 3:
            raise ValidationError(f"{long_path} row {k}: expected 3 columns")
        t, v = _floats(row[1:], f"{long_path} row {k}")
        by_id[row[0].strip()][0].append(t)
        by_id[row[0].strip()][1].append(v)
    resp = {}
    for k, row in enumerate(_header(_rows(responses_path), ("subject_id", "response"),
                                    responses_path), start=2):
        if len(row) != 2:
            raise ValidationError(f"{responses_path} row {k}: expected 2 columns")
        sid = row[0].strip()
        if sid in resp:
            raise ValidationError(f"{responses_path}: duplicate subject {sid!r}")
        resp[sid] = _floats(row[1:], f"{responses_path} row {k}")[0]
    missing = sorted(set(by_id) - set(resp))
    if missing:
        raise ValidationError(f"no response for subject {missing[0]!r}")
    extra = sorted(set(resp) - set(by_id))
    if extra:
        raise ValidationError(f"subject {extra[0]!r} has a response but no observations")
    ids = _id_order(list(by_id))
    return validate_sparse([by_id[i] for i in ids], [resp[i] for i in ids], ids=ids)


def write_sparse(sample: SparseSample, long_path, responses_path) -> None:
    ids = sample.ids if sample.ids is not None else [str(i + 1) for i in range(sample.n)]
    with open(long_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "time", "value"])
        for sid, s in zip(ids, sample.subjects):
            for t, v in zip(s.times, s.values):
                w.writerow([sid, FLOAT_FORMAT % t, FLOAT_FORMAT % v])
    with open(responses_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "response"])
        for sid, y in zip(ids, sample.responses):
            w.writerow([sid, FLOAT_FORMAT % y])


def dumps_report(obj: Any) -> str:
    """JSON with floats at 17 significant digits; non-finite floats become null."""

    def enc(x, indent):
        pad = "  " * (indent + 1)
        if isinstance(x, dict):
            if not x:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, indent + 1)}" for k, v in x.items()]
            return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
        if isinstance(x, (list, tuple, np.ndarray)):
            return "[" + ", ".join(enc(v, indent) for v in x) + "]"
        if isinstance(x, (bool, np.bool_)):
            return "true" if x else "false"
        if isinstance(x, (int, np.integer)):
            return str(int(x))
        if isinstance(x, (float, np.floating)):
            return FLOAT_FORMAT % x if math.isfinite(x) else "null"
        if x is None:
            return "null"
        return json.dumps(str(x))

    return enc(obj, 0) + "\n"


def write_text(path, text: str) -> None:
    Path(path).write_text(text)
