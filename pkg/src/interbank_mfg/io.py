"""CSV and JSON writers with byte-stable number formatting."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .risk import RISK_COLUMNS

CONDITIONAL_COLUMNS = {c for c in RISK_COLUMNS if "given" in c} | {"p0", "se_p0", "n_major_default"}


def fmt(x) -> str:
    """Shortest round-tripping text for numbers; empty for ``None``."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.write_text(csv_text(header, rows))
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json_text(obj))
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- table layouts ------------------------------------------------------------

def risk_table(sweep):
    """Header and rows of the risk CSV for a :class:`ScenarioSweep`.

    Rows without a major bank (``G = 0``) leave the conditional columns and
    ``p0`` empty: there is nothing to condition on.
    """
    header = [sweep.parameter, "variant"] + RISK_COLUMNS + ["noise_checksum"]
    rows = []
    for r in sweep.rows:
        d = r.report.row()
        vals = [None if (not r.has_major and c in CONDITIONAL_COLUMNS) else d[c] for c in RISK_COLUMNS]
        rows.append([r.value, r.variant] + vals + [r.noise_checksum])
    return header, rows


def loss_table(sweep):
    header = [sweep.parameter, "variant", "histogram", "k", "mass"]
    rows = []
    for r in sweep.rows:
        for name, k, mass in r.losses.rows():
            if name != "total" and not r.has_major:
                continue
            rows.append([r.value, r.variant, name, k, mass])
    return header, rows


def trajectory_rows(tr):
    """Long-format ``(path, t, bank_id, x)`` rows from :class:`Trajectories`."""
    rows = []
    for j, path in enumerate(tr.path_index):
        for k, t in enumerate(tr.times):
            rows.append((int(path), t, "major", tr.major[j, k]))
            for b in range(tr.minors.shape[2]):
                rows.append((int(path), t, f"minor_{b + 1}", tr.minors[j, k, b]))
            rows.append((int(path), t, "average", tr.average[j, k]))
            rows.append((int(path), t, "market", tr.market[j, k]))
    return rows
