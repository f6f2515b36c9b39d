"""Output files: atomic writes, CSV at full double precision, JSON summaries."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from typing import Iterable, Sequence

import numpy as np

TIMESERIES_PREFIXES = ("e1", "e2", "ztilde", "u", "v")
GRID_COLUMNS = ("T", "omega", "rejection", "ISE", "ISC", "diverged", "sup_zeta_bar",
                "lambda_min_QY1", "Lambda_V", "Gamma_V", "error_bound", "certified", "error")
SWEEP_COLUMNS = ("omega", "kappa", "lambda_min_QY1", "Lambda_V", "Gamma_V", "bound", "C1",
                 "Lambda_V_printed", "Gamma_V_printed", "bound_printed")


def fmt(x) -> str:
    """Format a cell: floats with 17 significant digits, booleans lower-case."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_atomic(path: str, data: str) -> None:
    """Write ``data`` to a temporary file in the target directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def timeseries_header(n: int) -> list:
    cols = ["t"]
    cols += [f"e1[{i}]" for i in range(n)]
    cols += [f"e2[{i}]" for i in range(n)]
    cols += [f"ztilde[{j}]" for j in range(3 * n)]
    cols += [f"u[{i}]" for i in range(n)]
    cols += [f"v[{i}]" for i in range(n)]
    return cols


def timeseries_csv(result) -> str:
    n = result.config.model.n
    data = np.hstack([result.t[:, None], result.e1, result.e2, result.z_tilde, result.u, result.v])
    return csv_text(timeseries_header(n), data.tolist())


def grid_csv(cells) -> str:
    return csv_text(GRID_COLUMNS, ([c.row()[k] for k in GRID_COLUMNS] for c in cells))


def sweep_csv(points) -> str:
    return csv_text(SWEEP_COLUMNS, ([getattr(p, k) for k in SWEEP_COLUMNS] for p in points))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


def write_json(path: str, obj) -> None:
    write_atomic(path, json_text(obj))
