"""Phase diagram over (g_ac, g_mc).

Each cell is an independent evolve + classify run; results are written back by
grid index, so the diagram does not depend on scheduling or worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .chaostest import PHASE_NUMERALS, ChaosConfig, analyse
from .dynamics import evolve
from .io import FormatError, read_csv, write_csv, write_json
from .operators import SystemParams

log = logging.getLogger(__name__)

FAILED = "Failed"
SKIPPED = "Skipped"


@dataclass
class PhaseDiagram:
    g_ac_axis: np.ndarray
    g_mc_axis: np.ndarray
    r_map: np.ndarray
    k_map: np.ndarray
    phase_map: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.g_ac_axis = np.asarray(self.g_ac_axis, dtype=float)
        self.g_mc_axis = np.asarray(self.g_mc_axis, dtype=float)
        shape = (len(self.g_ac_axis), len(self.g_mc_axis))
        if 0 in shape:
            raise ValueError("phase diagram needs at least one value on each axis")
        self.r_map = np.asarray(self.r_map, dtype=float)
        self.k_map = np.asarray(self.k_map, dtype=float)
        self.phase_map = np.asarray(self.phase_map, dtype=object)
        for name in ("r_map", "k_map", "phase_map"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def shape(self):
        return self.phase_map.shape

    def numerals(self) -> np.ndarray:
        """Phase labels as I / II / III (other states kept verbatim)."""
        return np.vectorize(lambda s: PHASE_NUMERALS.get(s, s), otypes=[object])(self.phase_map)

    def cell(self, g_ac: float, g_mc: float):
        i = int(np.argmin(np.abs(self.g_ac_axis - g_ac)))
        j = int(np.argmin(np.abs(self.g_mc_axis - g_mc)))
        return self.r_map[i, j], self.k_map[i, j], self.phase_map[i, j]

    def same_maps(self, other: "PhaseDiagram") -> bool:
        def eq(a, b):
            return a.shape == b.shape and np.array_equal(a, b, equal_nan=True)
        return (
            eq(self.g_ac_axis, other.g_ac_axis) and eq(self.g_mc_axis, other.g_mc_axis)
            and eq(self.r_map, other.r_map) and eq(self.k_map, other.k_map)
            and np.array_equal(self.phase_map, other.phase_map)
        )


def default_axis(points: int = 41, upper: float = 4.0) -> np.ndarray:
    return np.linspace(0.0, upper, points)


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha1(blob).hexdigest()


def run_cell(base: SystemParams, g_ac: float, g_mc: float, cfg: ChaosConfig) -> dict:
    """Evolve and classify one grid point; failures become a labelled result."""
    try:
        params = base.with_(g_ac=float(g_ac), g_mc=float(g_mc))
        series = evolve(params)
        m = analyse(series, cfg)
        return {"r_value": m.r_value, "k_median": m.k_median, "phase": m.phase,
                "truncation_warnings": int(np.count_nonzero(series.truncation_flags)), "error": None}
    except Exception as exc:  # a cell failure must not abort the sweep
        log.warning("cell g_ac=%g g_mc=%g failed: %s", g_ac, g_mc, exc)
        return {"r_value": math.nan, "k_median": math.nan, "phase": FAILED,
                "truncation_warnings": 0, "error": f"{type(exc).__name__}: {exc}"}


def _cell_task(args):
    base, g_ac, g_mc, cfg = args
    return run_cell(base, g_ac, g_mc, cfg)


def _check_axis(axis, name):
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or len(axis) == 0:
        raise ValueError(f"{name} axis must be a non-empty 1-D sequence")
    d = np.diff(axis)
    if len(d) and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError(f"{name} axis must be strictly monotone")
    return axis


def run_sweep(base: SystemParams, g_ac_axis=None, g_mc_axis=None, workers: int = 1,
              cfg: ChaosConfig | None = None, cells=None) -> PhaseDiagram:
    """Classify every (g_ac, g_mc) cell.  ``cells`` limits the run to (i, j) indices."""
    g_ac_axis = _check_axis(default_axis() if g_ac_axis is None else g_ac_axis, "g_ac")
    g_mc_axis = _check_axis(default_axis() if g_mc_axis is None else g_mc_axis, "g_mc")
    cfg = cfg or ChaosConfig(seed=base.seed)
    shape = (len(g_ac_axis), len(g_mc_axis))
    todo = sorted(set(map(tuple, cells))) if cells is not None else [
        (i, j) for i in range(shape[0]) for j in range(shape[1])]
    tasks = [(base, g_ac_axis[i], g_mc_axis[j], cfg) for i, j in todo]

    start = time.time()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_task, tasks))
    else:
        results = [_cell_task(t) for t in tasks]
    wall = time.time() - start

    r_map = np.full(shape, np.nan)
    k_map = np.full(shape, np.nan)
    phase_map = np.full(shape, SKIPPED, dtype=object)
    errors = {}
    trunc = 0
    for (i, j), res in zip(todo, results):
        r_map[i, j] = res["r_value"]
        k_map[i, j] = res["k_median"]
        phase_map[i, j] = res["phase"]
        trunc += res["truncation_warnings"] > 0
        if res["error"]:
            errors[f"{g_ac_axis[i]:g},{g_mc_axis[j]:g}"] = res["error"]

    config = {"base": base.to_dict(), "chaos": asdict(cfg),
              "g_ac_axis": g_ac_axis.tolist(), "g_mc_axis": g_mc_axis.tolist()}
    provenance = {
        "config": config,
        "config_hash": config_hash(config),
        "seed": base.seed,
        "code_version": __version__,
        "cells_run": len(todo),
        "cells_with_truncation_warnings": int(trunc),
        "failures": errors,
        "workers": workers,
        "wall_time_s": wall,
    }
    return PhaseDiagram(g_ac_axis, g_mc_axis, r_map, k_map, phase_map, provenance)


def _meta_path(path: Path) -> Path:
    name = path.name[:-4] if path.name.endswith(".csv") else path.name
    return path.with_name(name + ".meta.json")


def save_diagram(diagram: PhaseDiagram, path, config: dict | None = None) -> Path:
    """Long-form CSV (g_ac, g_mc, r_value, k_median, phase) plus JSON sidecar.

    ``config`` is embedded in the CSV header line; it defaults to the sweep config.
    """
    path = Path(path)
    rows = {"g_ac": [], "g_mc": [], "r_value": [], "k_median": [], "phase": []}
    for i, ga in enumerate(diagram.g_ac_axis):
        for j, gm in enumerate(diagram.g_mc_axis):
            rows["g_ac"].append(ga)
            rows["g_mc"].append(gm)
            rows["r_value"].append(diagram.r_map[i, j])
            rows["k_median"].append(diagram.k_map[i, j])
            rows["phase"].append(str(diagram.phase_map[i, j]))
    write_csv(path, rows, config if config is not None else diagram.provenance.get("config"))
    write_json(_meta_path(path), diagram.provenance)
    return path


def load_diagram(path) -> PhaseDiagram:
    path = Path(path)
    _, cols = read_csv(path, types={"phase": str})
    missing = [c for c in ("g_ac", "g_mc", "r_value", "k_median", "phase") if c not in cols]
    if missing:
        raise FormatError(f"{path}: missing column(s) {', '.join(missing)}")
    n = len(cols["g_ac"])
    if n == 0:
        raise FormatError(f"{path}: empty grid")
    ga_axis = list(dict.fromkeys(cols["g_ac"].tolist()))
    gm_axis = list(dict.fromkeys(cols["g_mc"].tolist()))
    shape = (len(ga_axis), len(gm_axis))
    r_map = np.full(shape, np.nan)
    k_map = np.full(shape, np.nan)
    phase_map = np.full(shape, None, dtype=object)
    ga_idx = {v: i for i, v in enumerate(ga_axis)}
    gm_idx = {v: j for j, v in enumerate(gm_axis)}
    for row in range(n):
        i = ga_idx[cols["g_ac"][row]]
        j = gm_idx[cols["g_mc"][row]]
        if phase_map[i, j] is not None:
            raise FormatError(f"{path}: data row {row + 1} repeats cell g_ac={ga_axis[i]:g}, g_mc={gm_axis[j]:g}")
        r_map[i, j] = cols["r_value"][row]
        k_map[i, j] = cols["k_median"][row]
        phase_map[i, j] = cols["phase"][row]
    holes = np.argwhere(phase_map == None)  # noqa: E711
    if len(holes):
        i, j = holes[0]
        raise FormatError(f"{path}: grid incomplete, no row for g_ac={ga_axis[i]:g}, g_mc={gm_axis[j]:g}")
    meta = _meta_path(path)
    provenance = json.loads(meta.read_text()) if meta.exists() else {}
    return PhaseDiagram(np.array(ga_axis), np.array(gm_axis), r_map, k_map, phase_map, provenance)
