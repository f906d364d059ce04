"""Parameter sweeps over the bias ``b`` and the reweighting factor ``s_plus``.

Rows are plain records that carry the full parameter tuple that produced
them.  Extraction of maxima/minima skips non-converged rows.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .eos import EOSSolution, OrderParams, ProblemParams, solve_eos

CSV_COLUMNS = (
    "loss", "alpha", "r_plus", "sigma_plus", "sigma_minus", "s_plus",
    "b", "m", "u", "chi", "converged", "iterations", "mode",
)
# appended after the fixed columns so positional readers keep working
EXTRA_COLUMNS = ("boundary",)

DEFAULT_B_RANGE = (-6.0, 6.0)
DEFAULT_COARSE_POINTS = 121
DEFAULT_B_TOL = 1e-4
TIE_TOL = 1e-10

MODES = ("fixed_b_zero", "maximize_m", "minimize_u")
MODE_ALIASES = {"b0": "fixed_b_zero", "mmax": "maximize_m", "umin": "minimize_u"}

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def default_s_grid(points: int = 51, lo: float = 0.02, hi: float = 0.98):
    """Equispaced grid on ``[lo, hi]`` that contains ``0.5`` exactly."""
    grid = np.linspace(lo, hi, points)
    k = int(np.argmin(np.abs(grid - 0.5)))
    if abs(grid[k] - 0.5) < 1e-9:
        grid[k] = 0.5
        return [float(x) for x in grid]
    return sorted({float(x) for x in grid} | {0.5})


@dataclass(frozen=True)
class SweepRow:
    loss: str
    alpha: float
    r_plus: float
    sigma_plus: float
    sigma_minus: float
    s_plus: float
    b: float
    m: float
    u: float
    chi: float
    converged: bool
    iterations: int
    mode: str
    boundary: bool = False

    @classmethod
    def from_solution(cls, params: ProblemParams, sol: EOSSolution, mode: str, boundary: bool = False):
        return cls(
            params.loss.tag, params.alpha, params.r_plus, params.sigma_plus, params.sigma_minus,
            params.s_plus, params.b, sol.m, sol.energy, sol.chi, sol.converged, sol.iterations,
            mode, boundary,
        )

    def relabel(self, mode: str, boundary: bool | None = None) -> "SweepRow":
        d = asdict(self)
        d["mode"] = mode
        if boundary is not None:
            d["boundary"] = boundary
        return SweepRow(**d)


@dataclass(frozen=True)
class BExtremum:
    """Refined optimum over ``b``; iterates as ``(value, b, partner)``.

    ``partner`` is ``u`` at the maximum of ``m`` or ``m`` at the minimum of
    ``u``.  ``boundary`` is set when the coarse optimum sits on an end of the
    scanned range, i.e. the true optimum may lie outside it.
    """

    value: float
    b: float
    partner: float
    boundary: bool
    row: SweepRow | None
    coarse: tuple[SweepRow, ...] = field(default=(), repr=False)
    failed: tuple[SweepRow, ...] = field(default=(), repr=False)

    def __iter__(self):
        return iter((self.value, self.b, self.partner))


def _solve(params, init, solver_kw):
    return solve_eos(params, init=init, **solver_kw)


def _cold(args):
    params, solver_kw = args
    return _solve(params, None, solver_kw)


def _solve_grid(template: ProblemParams, key: str, grid, warm_start: bool, workers: int, solver_kw):
    points = [template.replace(**{key: float(x)}) for x in grid]
    if not warm_start and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            sols = list(pool.map(_cold, [(p, solver_kw) for p in points]))
        return points, sols
    sols = []
    prev = None
    for p in points:
        init = OrderParams(prev.m, prev.chi) if (warm_start and prev is not None and prev.converged) else None
        sol = _solve(p, init, solver_kw)
        if init is not None and not sol.converged:
            # a bad warm start must not poison the rest of the sweep
            sol = _solve(p, None, solver_kw)
        sols.append(sol)
        prev = sol
    return points, sols


def sweep_b(params_template: ProblemParams, b_grid, warm_start: bool = True, workers: int = 1,
            mode: str = "sweep_b", **solver_kw) -> list[SweepRow]:
    """One EOS solve per ``b``, warm-started along the grid; rows in grid order."""
    b_grid = list(b_grid)
    if not b_grid:
        raise ValueError("b_grid must be nonempty")
    if any(b2 < b1 for b1, b2 in zip(b_grid, b_grid[1:])):
        raise ValueError("b_grid must be sorted")
    points, sols = _solve_grid(params_template, "b", b_grid, warm_start, workers, solver_kw)
    return [SweepRow.from_solution(p, s, mode) for p, s in zip(points, sols)]


def _pick(rows, key, sign, centre):
    """Best row by ``sign * key``; ties resolved toward ``centre`` then upward."""
    vals = np.array([sign * getattr(r, key) for r in rows])
    best = vals.max()
    tol = TIE_TOL * max(1.0, abs(best))
    tied = [i for i, v in enumerate(vals) if v >= best - tol]
    # distances are rounded so that e.g. 0.45 and 0.55 count as equally close to 0.5
    return min(tied, key=lambda i: (round(abs(centre(rows[i])), 12), -centre(rows[i])))


def _golden(f, lo, hi, tol):
    """Golden-section maximization of ``f`` on ``[lo, hi]``; f returns (score, payload)."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc[0] >= fd[0]:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return fc if fc[0] >= fd[0] else fd


def _optimize_b(params_template, b_range, coarse_points, b_tol, key, sign, mode, solver_kw):
    lo, hi = map(float, b_range)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError("b_range must be a finite interval lo < hi")
    if coarse_points < 3:
        raise ValueError("coarse_points must be at least 3")
    grid = np.linspace(lo, hi, coarse_points)
    coarse = sweep_b(params_template, grid, mode=mode, **solver_kw)
    good = [r for r in coarse if r.converged and math.isfinite(getattr(r, key))]
    failed = tuple(r for r in coarse if r not in good)
    if not good:
        return BExtremum(math.nan, math.nan, math.nan, False, None, tuple(coarse), failed)
    i = _pick(good, key, sign, lambda r: r.b)
    pos = int(np.argmin(np.abs(grid - good[i].b)))
    boundary = pos in (0, coarse_points - 1)
    a, b = grid[max(pos - 1, 0)], grid[min(pos + 1, coarse_points - 1)]
    best = good[i]
    init = OrderParams(best.m, best.chi)

    def f(x):
        p = params_template.replace(b=float(x))
        sol = solve_eos(p, init=init, **solver_kw)
        if not sol.converged:
            return -math.inf, None
        row = SweepRow.from_solution(p, sol, mode)
        return sign * getattr(row, key), row

    score, row = _golden(f, a, b, b_tol)
    if row is None or score < sign * getattr(best, key):
        row = best
    row = row.relabel(mode, boundary)
    partner = row.u if key == "m" else row.m
    return BExtremum(getattr(row, key), row.b, partner, boundary, row, tuple(coarse), failed)


def maximize_m_over_b(params_template: ProblemParams, b_range=DEFAULT_B_RANGE,
                      coarse_points: int = DEFAULT_COARSE_POINTS, b_tol: float = DEFAULT_B_TOL,
                      **solver_kw) -> BExtremum:
    """Coarse scan of ``m(b)`` then golden-section refinement around the best point."""
    return _optimize_b(params_template, b_range, coarse_points, b_tol, "m", 1.0, "maximize_m", solver_kw)


def minimize_u_over_b(params_template: ProblemParams, b_range=DEFAULT_B_RANGE,
                      coarse_points: int = DEFAULT_COARSE_POINTS, b_tol: float = DEFAULT_B_TOL,
                      **solver_kw) -> BExtremum:
    """Mirror of :func:`maximize_m_over_b` for the minimum of ``u(b)``."""
    return _optimize_b(params_template, b_range, coarse_points, b_tol, "u", -1.0, "minimize_u", solver_kw)


def sweep_s(params_template: ProblemParams, s_grid=None, mode: str = "fixed_b_zero",
            b_range=DEFAULT_B_RANGE, coarse_points: int = DEFAULT_COARSE_POINTS,
            b_tol: float = DEFAULT_B_TOL, warm_start: bool = True, workers: int = 1,
            **solver_kw) -> list[SweepRow]:
    """One row per ``s_plus``.

    ``fixed_b_zero`` solves at ``b = 0``; ``maximize_m`` and ``minimize_u``
    report the refined optimum over ``b`` (its ``b`` is in the row, and
    ``boundary`` marks optima pinned at the range ends).  Grid endpoints 0
    and 1 are allowed, but those rows are flagged through ``boundary``.
    """
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ValueError(f"unknown sweep mode {mode!r}; expected one of {MODES}")
    s_grid = default_s_grid() if s_grid is None else [float(s) for s in s_grid]
    if any(not 0.0 <= s <= 1.0 for s in s_grid):
        raise ValueError("s_grid must lie in [0, 1]")
    rows = []
    if mode == "fixed_b_zero":
        points, sols = _solve_grid(params_template.replace(b=0.0), "s_plus", s_grid, warm_start, workers, solver_kw)
        for p, sol in zip(points, sols):
            rows.append(SweepRow.from_solution(p, sol, mode, boundary=p.s_plus in (0.0, 1.0)))
        return rows
    opt = maximize_m_over_b if mode == "maximize_m" else minimize_u_over_b
    for s in s_grid:
        p = params_template.replace(s_plus=s)
        ext = opt(p, b_range, coarse_points, b_tol, **solver_kw)
        if ext.row is None:
            rows.append(SweepRow(p.loss.tag, p.alpha, p.r_plus, p.sigma_plus, p.sigma_minus, s,
                                 math.nan, math.nan, math.nan, math.nan, False, 0, mode, False))
        else:
            rows.append(ext.row.relabel(mode, ext.boundary or s in (0.0, 1.0)))
    return rows


def argbest_s(rows, key: str = "m", maximize: bool = True) -> SweepRow:
    """Best converged row of an s-sweep; ties go to the ``s_plus`` closest to 1/2."""
    good = [r for r in rows if r.converged and math.isfinite(getattr(r, key))]
    if not good:
        raise ValueError("no converged rows to choose from")
    sign = 1.0 if maximize else -1.0
    return good[_pick(good, key, sign, lambda r: r.s_plus - 0.5)]


def argbest_b(rows, key: str = "m", maximize: bool = True) -> SweepRow:
    """Best converged row of a b-sweep; ties go to the smallest ``|b|``."""
    good = [r for r in rows if r.converged and math.isfinite(getattr(r, key))]
    if not good:
        raise ValueError("no converged rows to choose from")
    sign = 1.0 if maximize else -1.0
    return good[_pick(good, key, sign, lambda r: r.b)]


def split_failed(rows):
    """``(converged_rows, failed_rows)``."""
    return [r for r in rows if r.converged], [r for r in rows if not r.converged]


def format_value(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g") if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    return str(x)


def write_rows_csv(rows, fh, comments=()) -> None:
    """Write rows with the fixed column order; ``comments`` go first as ``# `` lines."""
    for line in comments:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS + EXTRA_COLUMNS)
    for r in rows:
        w.writerow([format_value(getattr(r, c)) for c in CSV_COLUMNS + EXTRA_COLUMNS])
