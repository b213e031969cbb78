"""Energy-corrected P1 finite elements for the heat equation on domains with re-entrant corners."""

import csv
import io
import json

from ._core import (
    CornerheatError,
    Mesh,
    compute_eoc,
    eoc_fit,
    l_shape,
    notched_rectangle,
    read_tmesh,
    run_study,
    singular_function,
)
from ._core import convergence_csv as _convergence_csv
from ._core import gamma_report as _gamma_report

__all__ = [
    "CornerheatError",
    "Mesh",
    "compute_eoc",
    "convergence_table",
    "eoc_fit",
    "find_gamma",
    "l_shape",
    "notched_rectangle",
    "read_tmesh",
    "run_study",
    "singular_function",
]


def _rows(text):
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append({k: (float(v) if v else None) for k, v in row.items()})
    return out


def convergence_table(study, levels=0, dt0=0.0, t_end=1.0, gamma=None):
    """Rows of the standard and corrected runs as dicts keyed by CSV column."""
    standard, corrected = _convergence_csv(study, levels, dt0, t_end, gamma)
    return _rows(standard), _rows(corrected)


def find_gamma(levels=0):
    """The per-level gamma search report as a dict."""
    return json.loads(_gamma_report(levels))
