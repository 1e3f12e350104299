"""CSV emission with fixed formatting and versioned cover files."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .conormal import ConormalPoint, Tube
from .cover import GoodCover
from .flow import PhasePoint

COVER_FORMAT_VERSION = 1
FLOAT_FMT = "{:.12e}"


class FormatError(ValueError):
    pass


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return FLOAT_FMT.format(v)
    if isinstance(v, complex):
        return FLOAT_FMT.format(v.real) + ("+" if v.imag >= 0 else "-") + FLOAT_FMT.format(abs(v.imag)) + "j"
    return str(v)


def write_csv(path, columns, rows, scenario_hash: str = "none") -> Path:
    """Write rows under a header naming each column with its unit.

    ``columns`` is a list of (name, unit) pairs; the first line is a
    comment carrying the scenario hash.  Floats use a fixed 13-digit
    exponent format so reruns are byte-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# scenario_hash={scenario_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{n} [{u}]" for n, u in columns])
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def read_csv(path):
    """(scenario hash, header, rows as strings)."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# scenario_hash="):
            raise FormatError(f"{path}: missing scenario hash line")
        rows = list(csv.reader(fh))
    return first.split("=", 1)[1], rows[0], rows[1:]


# ---------------------------------------------------------------------
# covers


def cover_to_dict(cover: GoodCover, model_spec: dict, H_spec: dict) -> dict:
    return {
        "version": COVER_FORMAT_VERSION,
        "model": model_spec,
        "H": H_spec,
        "tau": cover.tau,
        "r": cover.r,
        "covering_radius": cover.covering_radius,
        "centers": [
            {"u": float(t.center.u), "w": float(t.center.w), "x": cover.X[i].tolist(), "v": cover.V[i].tolist()}
            for i, t in enumerate(cover.tubes)
        ],
        "coloring": [int(c) for c in cover.colors],
    }


def save_cover(path, cover: GoodCover, model_spec: dict, H_spec: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cover_to_dict(cover, model_spec, H_spec), indent=1, sort_keys=True) + "\n")
    return path


def load_cover(path, build_H) -> GoodCover:
    """Read a cover file; ``build_H(model_spec, H_spec)`` reconstructs the submanifold."""
    d = json.loads(Path(path).read_text())
    if d.get("version") != COVER_FORMAT_VERSION:
        raise FormatError(f"unsupported cover format version {d.get('version')!r}")
    H = build_H(d["model"], d["H"])
    model = H.model
    X = np.array([c["x"] for c in d["centers"]], float)
    V = np.array([c["v"] for c in d["centers"]], float)
    tubes = []
    for j, c in enumerate(d["centers"]):
        xi = model.flat(X[j], V[j])
        tubes.append(Tube(ConormalPoint(c["u"], c["w"], PhasePoint(X[j], xi), j), d["tau"], d["r"], j))
    return GoodCover(H, d["tau"], d["r"], tubes, np.array(d["coloring"], int), X, V, d["covering_radius"])
