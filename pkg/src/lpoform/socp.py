"""Structured second-order cone subproblems and pluggable conic backends.

A ConvexSubproblem holds the assembled program in the standard form

    minimize    c'z + (1/2) z' diag(p) z
    subject to  A_eq z = b_eq
                A_in z <= b_in
                A z + b in Q_d      (one entry per second-order cone)

Backends translate that form to a native solver.  Labels attached to each
constraint group support structural audits and the text dump used for
offline debugging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import BackendError, ShapeError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
FAILURE = "numerical-failure"


@dataclass
class SocConstraint:
    """(A z + b) in Q_d: first component bounds the norm of the rest."""

    a: np.ndarray
    b: np.ndarray
    label: str

    @property
    def dim(self) -> int:
        return self.b.size


class ConvexSubproblem:
    """Dense-assembled conic program with named variable blocks."""

    def __init__(self):
        self.n = 0
        self.blocks: dict[str, slice] = {}
        self._eq_rows: list[np.ndarray] = []
        self._eq_rhs: list[np.ndarray] = []
        self._eq_labels: list[tuple[str, int]] = []
        self._in_rows: list[np.ndarray] = []
        self._in_rhs: list[np.ndarray] = []
        self._in_labels: list[tuple[str, int]] = []
        self.socs: list[SocConstraint] = []
        self._cost: np.ndarray | None = None
        self._pdiag: np.ndarray | None = None

    # -- variables ---------------------------------------------------------
    def add_block(self, name: str, size: int) -> slice:
        if name in self.blocks:
            raise ShapeError(f"duplicate variable block {name!r}")
        sl = slice(self.n, self.n + size)
        self.blocks[name] = sl
        self.n += size
        return sl

    def finalize_variables(self):
        self._cost = np.zeros(self.n)
        self._pdiag = np.zeros(self.n)

    # -- objective ---------------------------------------------------------
    @property
    def cost(self) -> np.ndarray:
        if self._cost is None:
            self.finalize_variables()
        return self._cost

    @property
    def pdiag(self) -> np.ndarray:
        if self._pdiag is None:
            self.finalize_variables()
        return self._pdiag

    # -- constraints -------------------------------------------------------
    def _check_rows(self, rows: np.ndarray, rhs: np.ndarray):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        if rows.shape != (rhs.size, self.n):
            raise ShapeError(
                f"constraint block {rows.shape} inconsistent with n={self.n}")
        return rows, rhs

    def add_equality(self, rows, rhs, label: str):
        rows, rhs = self._check_rows(rows, rhs)
        self._eq_rows.append(rows)
        self._eq_rhs.append(rhs)
        self._eq_labels.append((label, rhs.size))

    def add_inequality(self, rows, rhs, label: str):
        """rows @ z <= rhs"""
        rows, rhs = self._check_rows(rows, rhs)
        self._in_rows.append(rows)
        self._in_rhs.append(rhs)
        self._in_labels.append((label, rhs.size))

    def add_soc(self, a, b, label: str):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if a.shape != (b.size, self.n) or b.size < 2:
            raise ShapeError(f"cone block {a.shape} inconsistent with n={self.n}")
        self.socs.append(SocConstraint(a=a, b=b, label=label))

    # -- assembled views ----------------------------------------------------
    @property
    def a_eq(self) -> np.ndarray:
        if not self._eq_rows:
            return np.zeros((0, self.n))
        return np.vstack(self._eq_rows)

    @property
    def b_eq(self) -> np.ndarray:
        if not self._eq_rhs:
            return np.zeros(0)
        return np.concatenate(self._eq_rhs)

    @property
    def a_in(self) -> np.ndarray:
        if not self._in_rows:
            return np.zeros((0, self.n))
        return np.vstack(self._in_rows)

    @property
    def b_in(self) -> np.ndarray:
        if not self._in_rhs:
            return np.zeros(0)
        return np.concatenate(self._in_rhs)

    def count_rows(self, label: str) -> int:
        total = sum(n for lab, n in self._eq_labels if lab == label)
        total += sum(n for lab, n in self._in_labels if lab == label)
        return total

    def count_cones(self, label: str) -> int:
        return sum(1 for c in self.socs if c.label == label)

    def block_value(self, z: np.ndarray, name: str) -> np.ndarray:
        return z[self.blocks[name]]

    # -- diagnostics --------------------------------------------------------
    def to_conic_dump(self) -> str:
        """Sparse text dump: objective, triplets, cone list."""
        lines = [f"vars {self.n}"]
        for name, sl in self.blocks.items():
            lines.append(f"block {name} {sl.start} {sl.stop}")
        for i, v in enumerate(self.cost):
            if v != 0.0:
                lines.append(f"c {i} {v:.17g}")
        for i, v in enumerate(self.pdiag):
            if v != 0.0:
                lines.append(f"P {i} {i} {v:.17g}")

        def emit(kind, rows, rhs, label_groups):
            labels = []
            for lab, cnt in label_groups:
                labels.extend([lab] * cnt)
            for r in range(rows.shape[0]):
                for col in np.flatnonzero(rows[r]):
                    lines.append(f"{kind} {r} {col} {rows[r, col]:.17g}")
                lines.append(f"{kind}rhs {r} {rhs[r]:.17g} {labels[r]}")

        emit("eq", self.a_eq, self.b_eq, self._eq_labels)
        emit("le", self.a_in, self.b_in, self._in_labels)
        for k, cone in enumerate(self.socs):
            lines.append(f"soc {k} dim {cone.dim} {cone.label}")
            for r in range(cone.dim):
                for col in np.flatnonzero(cone.a[r]):
                    lines.append(f"soc {k} {r} {col} {cone.a[r, col]:.17g}")
                lines.append(f"socrhs {k} {r} {cone.b[r]:.17g}")
        return "\n".join(lines) + "\n"


@dataclass
class BackendSolution:
    x: np.ndarray | None
    status: str
    objective: float
    diagnostics: dict


def lower_quadratic(spb: ConvexSubproblem) -> ConvexSubproblem:
    """Rewrite the quadratic objective as a rotated-cone epigraph.

    For backends without native quadratic support: adds one scalar tau with
    (1/2) z' diag(p) z <= tau encoded as a second-order cone, and moves tau
    into the linear cost.
    """
    if not np.any(spb.pdiag):
        return spb
    idx = np.flatnonzero(spb.pdiag)
    out = ConvexSubproblem()
    for name, sl in spb.blocks.items():
        out.add_block(name, sl.stop - sl.start)
    tau = out.add_block("quad_epigraph", 1).start
    out.finalize_variables()
    out.cost[:spb.n] = spb.cost
    out.cost[tau] = 1.0

    def widen(rows):
        rows = np.atleast_2d(rows)
        return np.hstack([rows, np.zeros((rows.shape[0], 1))])

    for rows, rhs, (label, _) in zip(spb._eq_rows, spb._eq_rhs, spb._eq_labels):
        out.add_equality(widen(rows), rhs, label)
    for rows, rhs, (label, _) in zip(spb._in_rows, spb._in_rhs, spb._in_labels):
        out.add_inequality(widen(rows), rhs, label)
    for cone in spb.socs:
        out.add_soc(widen(cone.a), cone.b, cone.label)

    # ||[2 D z ; 2 tau - 1]|| <= 2 tau + 1  with D = sqrt(diag p)
    d = np.sqrt(spb.pdiag[idx])
    a = np.zeros((idx.size + 2, out.n))
    b = np.zeros(idx.size + 2)
    a[0, tau] = 2.0
    b[0] = 1.0
    for r, (col, dv) in enumerate(zip(idx, d)):
        a[1 + r, col] = 2.0 * dv
    a[-1, tau] = 2.0
    b[-1] = -1.0
    out.add_soc(a, b, "quad_epigraph")
    return out


class ClarabelBackend:
    """Interior-point conic backend (native quadratic objective)."""

    name = "clarabel"
    supports_soc = True
    supports_quadratic = True

    def __init__(self, tol: float = 1e-10, max_iter: int = 200,
                 verbose: bool = False):
        self.tol = tol
        self.max_iter = max_iter
        self.verbose = verbose

    def solve(self, spb: ConvexSubproblem) -> BackendSolution:
        import clarabel

        a_parts = [sp.csc_matrix(spb.a_eq), sp.csc_matrix(spb.a_in)]
        b_parts = [spb.b_eq, spb.b_in]
        cones = []
        if spb.b_eq.size:
            cones.append(clarabel.ZeroConeT(spb.b_eq.size))
        if spb.b_in.size:
            cones.append(clarabel.NonnegativeConeT(spb.b_in.size))
        for cone in spb.socs:
            a_parts.append(sp.csc_matrix(-cone.a))
            b_parts.append(cone.b)
            cones.append(clarabel.SecondOrderConeT(cone.dim))
        a_mat = sp.vstack(a_parts).tocsc()
        b_vec = np.concatenate(b_parts) if b_parts else np.zeros(0)
        p_mat = sp.diags(spb.pdiag, format="csc")

        settings = clarabel.DefaultSettings()
        settings.verbose = self.verbose
        settings.max_iter = self.max_iter
        settings.tol_gap_abs = self.tol
        settings.tol_gap_rel = self.tol
        settings.tol_feas = self.tol
        try:
            solver = clarabel.DefaultSolver(p_mat, spb.cost, a_mat, b_vec,
                                            cones, settings)
            result = solver.solve()
        except BaseException as exc:  # solver panics surface as pyo3 errors
            raise BackendError(f"clarabel failed: {exc}") from exc

        status_str = str(result.status)
        diagnostics = {"backend": self.name, "status": status_str,
                       "iterations": result.iterations,
                       "solve_time": result.solve_time}
        if status_str in ("Solved", "AlmostSolved"):
            x = np.asarray(result.x)
            return BackendSolution(x=x, status=OPTIMAL,
                                   objective=float(result.obj_val),
                                   diagnostics=diagnostics)
        if "Infeasible" in status_str:
            return BackendSolution(x=None, status=INFEASIBLE,
                                   objective=np.nan, diagnostics=diagnostics)
        return BackendSolution(x=None, status=FAILURE, objective=np.nan,
                               diagnostics=diagnostics)


class ScsBackend:
    """First-order splitting backend (ADMM); looser accuracy than clarabel."""

    name = "scs"
    supports_soc = True
    supports_quadratic = True

    def __init__(self, eps: float = 1e-9, max_iters: int = 200_000,
                 verbose: bool = False):
        self.eps = eps
        self.max_iters = max_iters
        self.verbose = verbose

    def solve(self, spb: ConvexSubproblem) -> BackendSolution:
        import scs

        a_parts = [sp.csc_matrix(spb.a_eq), sp.csc_matrix(spb.a_in)]
        b_parts = [spb.b_eq, spb.b_in]
        qdims = []
        for cone in spb.socs:
            a_parts.append(sp.csc_matrix(-cone.a))
            b_parts.append(cone.b)
            qdims.append(cone.dim)
        a_mat = sp.vstack(a_parts).tocsc()
        b_vec = np.concatenate(b_parts) if b_parts else np.zeros(0)
        data = {"A": a_mat, "b": b_vec, "c": spb.cost,
                "P": sp.diags(spb.pdiag, format="csc")}
        cone = {"z": int(spb.b_eq.size), "l": int(spb.b_in.size), "q": qdims}
        try:
            solver = scs.SCS(data, cone, eps_abs=self.eps, eps_rel=self.eps,
                             max_iters=self.max_iters, verbose=self.verbose)
            out = solver.solve()
        except BaseException as exc:
            raise BackendError(f"scs failed: {exc}") from exc
        status = out["info"]["status"]
        diagnostics = {"backend": self.name, "status": status,
                       "iterations": out["info"]["iter"]}
        if "solved" in status.lower():
            return BackendSolution(x=np.asarray(out["x"]), status=OPTIMAL,
                                   objective=float(out["info"]["pobj"]),
                                   diagnostics=diagnostics)
        if "infeasible" in status.lower():
            return BackendSolution(x=None, status=INFEASIBLE, objective=np.nan,
                                   diagnostics=diagnostics)
        return BackendSolution(x=None, status=FAILURE, objective=np.nan,
                               diagnostics=diagnostics)


def make_backend(name: str, **kwargs):
    if name == "clarabel":
        return ClarabelBackend(**kwargs)
    if name == "scs":
        return ScsBackend(**kwargs)
    raise BackendError(f"unknown backend {name!r}")
