"""CSV serialization of simulated curves."""

from __future__ import annotations

import csv
import io

from .runner import Curve, CurvePoint

HEADER = ("snr_db", "mse_csit", "ci95", "t_a", "t_q", "b", "epsilon", "bound")
_FIELDS = ("snr_db", "mse", "ci95", "t_a", "t_q", "b", "epsilon", "bound")


def _fmt(value) -> str:
    if isinstance(value, int):
        return str(value)
    return "%.16e" % value


def curve_to_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for p in points:
        w.writerow([_fmt(getattr(p, f)) for f in _FIELDS])
    return buf.getvalue()


def emit_csv(curve, path: str) -> None:
    """Write ``curve`` (a ``Curve`` or a list of points) to ``path``."""
    points = curve.points if isinstance(curve, Curve) else list(curve)
    text = curve_to_csv(points)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write curve CSV to {path}: {exc.strerror or exc}") from exc


def load_csv(path: str) -> list:
    """Parse a file written by :func:`emit_csv` back into curve points."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    points = []
    for row in rows[1:]:
        v = dict(zip(_FIELDS, row))
        points.append(CurvePoint(
            snr_db=float(v["snr_db"]), mse=float(v["mse"]), ci95=float(v["ci95"]),
            t_a=int(v["t_a"]), t_q=int(v["t_q"]), b=float(v["b"]),
            epsilon=float(v["epsilon"]), bound=float(v["bound"]),
        ))
    return points
