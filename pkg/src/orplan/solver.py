"""Thin declarative layer over the HiGHS LP/MIP engine (via scipy.optimize).

Models are built column- and row-wise with bulk numpy-friendly calls so that
large scenario LPs assemble fast.  LP solves expose dual values normalized to
d(objective)/d(rhs) for each row as written, which makes cutting-plane code
independent of the engine's sign conventions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

__all__ = ["LinearModel", "SolveResult", "solve"]

LE, GE, EQ = "<=", ">=", "=="

# Above this row count the interior-point method usually beats simplex on the
# wide scenario LPs produced by the second-stage problems.
_IPM_ROW_THRESHOLD = 4000


@dataclass
class SolveResult:
    status: str  # optimal | feasible-with-gap | infeasible | time-limit | error
    objective: float | None
    x: np.ndarray | None
    duals: np.ndarray | None  # LP only; duals[r] = d obj / d rhs[r]
    gap: float | None
    wall_time: float
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible-with-gap", "time-limit") and self.x is not None


class LinearModel:
    """A minimize-only linear model with continuous and binary variables."""

    def __init__(self, name: str = ""):
        self.name = name
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._obj: list[float] = []
        self._binary: list[bool] = []
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._senses: list[str] = []
        self._rhs: list[float] = []
        self.obj_offset: float = 0.0
        self.time_limit: float | None = None
        self.mip_gap: float | None = None

    # -- variables -----------------------------------------------------------
    def add_var(self, lb: float = 0.0, ub: float = np.inf, obj: float = 0.0,
                binary: bool = False) -> int:
        self._lb.append(0.0 if binary else lb)
        self._ub.append(1.0 if binary else ub)
        self._obj.append(obj)
        self._binary.append(binary)
        return len(self._lb) - 1

    def add_vars(self, count: int, lb: float = 0.0, ub: float = np.inf,
                 obj: "np.ndarray | float" = 0.0, binary: bool = False) -> np.ndarray:
        start = len(self._lb)
        self._lb.extend([0.0 if binary else lb] * count)
        self._ub.extend([1.0 if binary else ub] * count)
        objs = np.broadcast_to(np.asarray(obj, dtype=float), (count,))
        self._obj.extend(objs.tolist())
        self._binary.extend([binary] * count)
        return np.arange(start, start + count)

    def add_objective(self, indices: np.ndarray, coefs: np.ndarray) -> None:
        obj = np.asarray(self._obj)
        np.add.at(obj, np.asarray(indices, dtype=int), np.asarray(coefs, dtype=float))
        self._obj = obj.tolist()

    @property
    def num_vars(self) -> int:
        return len(self._lb)

    @property
    def num_rows(self) -> int:
        return len(self._rhs)

    @property
    def has_integers(self) -> bool:
        return any(self._binary)

    # -- constraints ---------------------------------------------------------
    def add_constr(self, indices, coefs, sense: str, rhs: float) -> int:
        idx = np.asarray(indices, dtype=int)
        self._rows.append(np.full(idx.shape, len(self._rhs), dtype=int))
        self._cols.append(idx)
        self._vals.append(np.asarray(coefs, dtype=float))
        self._senses.append(sense)
        self._rhs.append(float(rhs))
        return len(self._rhs) - 1

    def add_constrs(self, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray,
                    senses, rhs: np.ndarray) -> np.ndarray:
        """Bulk-add ``max(rows)+1`` constraints given COO triplets with row
        indices local to this call."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        count = rhs.shape[0]
        base = len(self._rhs)
        self._rows.append(np.asarray(rows, dtype=int) + base)
        self._cols.append(np.asarray(cols, dtype=int))
        self._vals.append(np.asarray(vals, dtype=float))
        if isinstance(senses, str):
            self._senses.extend([senses] * count)
        else:
            self._senses.extend(senses)
        self._rhs.extend(rhs.tolist())
        return np.arange(base, base + count)

    # -- assembly ------------------------------------------------------------
    def _matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = cols = np.empty(0, dtype=int)
            vals = np.empty(0)
        a = sp.csr_matrix((vals, (rows, cols)), shape=(len(self._rhs), self.num_vars))
        return a, np.asarray(self._rhs)

    def dump(self, path: str) -> None:
        """Write the model in LP text format (debugging aid)."""
        a, rhs = self._matrix()
        a = a.tocoo()
        terms: dict[int, list[str]] = {}
        for r, c, v in zip(a.row, a.col, a.data):
            terms.setdefault(int(r), []).append(f"{v:+.12g} x{c}")
        lines = ["Minimize", " obj: " + " ".join(
            f"{v:+.12g} x{j}" for j, v in enumerate(self._obj) if v != 0.0)]
        lines.append("Subject To")
        op = {LE: "<=", GE: ">=", EQ: "="}
        for r in range(len(rhs)):
            lines.append(f" c{r}: " + " ".join(terms.get(r, ["0 x0"])) + f" {op[self._senses[r]]} {rhs[r]:.12g}")
        lines.append("Bounds")
        for j, (lo, hi) in enumerate(zip(self._lb, self._ub)):
            hi_s = "+inf" if np.isinf(hi) else f"{hi:.12g}"
            lines.append(f" {lo:.12g} <= x{j} <= {hi_s}")
        if self.has_integers:
            lines.append("Binary")
            lines.append(" " + " ".join(f"x{j}" for j, b in enumerate(self._binary) if b))
        lines.append("End")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _solve_lp(model: LinearModel, method: str | None) -> SolveResult:
    a, rhs = model._matrix()
    senses = np.array(model._senses)
    is_eq = senses == EQ
    is_ge = senses == GE
    # linprog accepts only A_ub x <= b_ub and A_eq x = b_eq; flip >= rows.
    sign = np.where(is_ge, -1.0, 1.0)
    a_ub = sp.diags(sign[~is_eq]) @ a[~is_eq] if (~is_eq).any() else None
    b_ub = (sign[~is_eq] * rhs[~is_eq]) if (~is_eq).any() else None
    a_eq = a[is_eq] if is_eq.any() else None
    b_eq = rhs[is_eq] if is_eq.any() else None
    if method is None:
        method = "highs-ipm" if a.shape[0] > _IPM_ROW_THRESHOLD else "highs"
    options = {}
    if model.time_limit is not None:
        options["time_limit"] = model.time_limit
    t0 = time.perf_counter()
    res = linprog(
        c=np.asarray(model._obj),
        A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
        bounds=list(zip(model._lb, model._ub)),
        method=method, options=options,
    )
    wall = time.perf_counter() - t0
    if res.status == 0:
        duals = np.zeros(len(rhs))
        if (~is_eq).any():
            duals[~is_eq] = sign[~is_eq] * res.ineqlin.marginals
        if is_eq.any():
            duals[is_eq] = res.eqlin.marginals
        return SolveResult("optimal", float(res.fun) + model.obj_offset, res.x, duals,
                           0.0, wall, res.message)
    status = {2: "infeasible", 3: "error", 1: "time-limit"}.get(res.status, "error")
    return SolveResult(status, None, None, None, None, wall, res.message)


def _solve_mip(model: LinearModel) -> SolveResult:
    a, rhs = model._matrix()
    senses = np.array(model._senses)
    lo = np.where(senses == LE, -np.inf, rhs)
    hi = np.where(senses == GE, np.inf, rhs)
    options: dict = {}
    if model.time_limit is not None:
        options["time_limit"] = model.time_limit
    if model.mip_gap is not None:
        options["mip_rel_gap"] = model.mip_gap
    constraints = LinearConstraint(a, lo, hi) if a.shape[0] else None
    t0 = time.perf_counter()
    res = milp(
        c=np.asarray(model._obj),
        constraints=constraints,
        integrality=np.asarray(model._binary, dtype=int),
        bounds=Bounds(np.asarray(model._lb), np.asarray(model._ub)),
        options=options,
    )
    wall = time.perf_counter() - t0
    gap = float(res.mip_gap) if res.mip_gap is not None else None
    if res.status == 0 and res.x is not None:
        status = "optimal" if (gap or 0.0) <= 1e-9 else "feasible-with-gap"
        return SolveResult(status, float(res.fun) + model.obj_offset, res.x, None,
                           gap, wall, res.message)
    if res.status == 1 and res.x is not None:
        return SolveResult("time-limit", float(res.fun) + model.obj_offset, res.x, None,
                           gap, wall, res.message)
    status = {1: "time-limit", 2: "infeasible", 3: "error"}.get(res.status, "error")
    return SolveResult(status, None, None, None, None, wall, res.message)


def solve(model: LinearModel, method: str | None = None) -> SolveResult:
    """Solve the model; LPs report duals, MIPs report the achieved gap."""
    try:
        if model.has_integers:
            return _solve_mip(model)
        return _solve_lp(model, method)
    except (ValueError, TypeError) as exc:  # malformed model
        return SolveResult("error", None, None, None, None, 0.0, str(exc))
