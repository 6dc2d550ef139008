"""Exact rational linear programming: dense two-phase tableau simplex with Bland's rule."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

LE, GE, EQ = "<=", ">=", "="


class LPError(RuntimeError):
    pass


@dataclass
class Constraint:
    coeffs: dict[int, Fraction]
    op: str
    rhs: Fraction
    name: str


@dataclass
class LinearProgram:
    """max/min c.x subject to rows, all variables >= 0."""
    sense: str = "max"
    var_names: list[str] = field(default_factory=list)
    objective: dict[int, Fraction] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)

    def __post_init__(self):
        self._index = {n: i for i, n in enumerate(self.var_names)}

    def var(self, name: str) -> int:
        i = self._index.get(name)
        if i is None:
            i = len(self.var_names)
            self.var_names.append(name)
            self._index[name] = i
        return i

    def has_var(self, name: str) -> bool:
        return name in self._index

    def set_objective(self, coeffs: Mapping[str, object]):
        self.objective = {}
        for n, c in coeffs.items():
            c = Fraction(c)
            if c:
                i = self.var(n)
                self.objective[i] = self.objective.get(i, Fraction(0)) + c

    def add(self, coeffs: Mapping[str, object], op: str, rhs, name: str | None = None) -> Constraint:
        row: dict[int, Fraction] = {}
        for n, c in coeffs.items():
            c = Fraction(c)
            if c:
                i = self.var(n)
                row[i] = row.get(i, Fraction(0)) + c
        row = {i: c for i, c in row.items() if c}
        con = Constraint(row, op, Fraction(rhs), name or f"c{len(self.constraints)}")
        self.constraints.append(con)
        return con

    def to_lp_format(self) -> str:
        """CPLEX LP text for cross-checking with external solvers."""
        def expr(coeffs):
            parts = []
            for i, c in sorted(coeffs.items()):
                sign = "-" if c < 0 else "+"
                parts.append(f"{sign} {_num(abs(c))} {_lpname(self.var_names[i])}")
            s = " ".join(parts) if parts else "0 " + _lpname(self.var_names[0])
            return s[2:] if s.startswith("+ ") else s
        lines = ["Maximize" if self.sense == "max" else "Minimize", " obj: " + expr(self.objective), "Subject To"]
        for c in self.constraints:
            lines.append(f" {_lpname(c.name)}: {expr(c.coeffs)} {c.op} {_num(c.rhs)}")
        lines.append("End")
        return "\n".join(lines) + "\n"


def _num(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{float(x)!r}"


def _lpname(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in s)


@dataclass
class LPSolution:
    status: str  # optimal | infeasible | unbounded
    objective: Fraction | None = None
    primal: dict[str, Fraction] = field(default_factory=dict)
    dual: dict[str, Fraction] = field(default_factory=dict)
    pivots: int = 0


def solve_exact(lp: LinearProgram, check: bool = True) -> LPSolution:
    """Solve exactly. Duals follow the convention objective = sum_i rhs_i * dual_i.

    For a max problem, duals of <= rows are >= 0 and of >= rows are <= 0;
    for a min problem the signs flip.
    """
    n = len(lp.var_names)
    m = len(lp.constraints)
    sign = 1 if lp.sense == "max" else -1
    # normalise rows to rhs >= 0
    rows, ops, flips = [], [], []
    for con in lp.constraints:
        coeffs, op, rhs = dict(con.coeffs), con.op, con.rhs
        flip = rhs < 0
        if flip:
            coeffs = {i: -c for i, c in coeffs.items()}
            rhs = -rhs
            op = {LE: GE, GE: LE, EQ: EQ}[op]
        rows.append((coeffs, rhs))
        ops.append(op)
        flips.append(flip)
    # column layout: originals | slack/surplus | artificials
    ncols = n
    unit_col = [0] * m  # the column that starts as e_i
    extra = []  # (row, coef) per slack/surplus column
    for i, op in enumerate(ops):
        if op in (LE, GE):
            extra.append((i, Fraction(1) if op == LE else Fraction(-1)))
    slack_of = {}
    for k, (i, c) in enumerate(extra):
        slack_of[i] = n + k
    ncols = n + len(extra)
    art_rows = [i for i, op in enumerate(ops) if op != LE]
    art_col = {}
    for k, i in enumerate(art_rows):
        art_col[i] = ncols + k
    total = ncols + len(art_rows)
    T: list[list[Fraction]] = []
    basis = []
    zero = Fraction(0)
    for i, (coeffs, rhs) in enumerate(rows):
        r = [zero] * (total + 1)
        for j, c in coeffs.items():
            r[j] = c
        if i in slack_of:
            r[slack_of[i]] = extra[slack_of[i] - n][1]
        if i in art_col:
            r[art_col[i]] = Fraction(1)
            basis.append(art_col[i])
            unit_col[i] = art_col[i]
        else:
            basis.append(slack_of[i])
            unit_col[i] = slack_of[i]
        r[total] = rhs
        T.append(r)
    is_art = [False] * total
    for c in art_col.values():
        is_art[c] = True
    pivots = 0

    def reduced(cost):
        # z-row: r_j = cost_j - sum_i cost_{B_i} T[i][j]; rhs entry = -objective
        z = [Fraction(cost.get(j, 0)) for j in range(total)] + [zero]
        for i, b in enumerate(basis):
            cb = cost.get(b, 0)
            if cb:
                row = T[i]
                for j in range(total + 1):
                    if row[j]:
                        z[j] -= cb * row[j]
        return z

    def pivot(r, c, z):
        nonlocal pivots
        pivots += 1
        prow = T[r]
        pv = prow[c]
        if pv != 1:
            inv = 1 / pv
            for j in range(total + 1):
                if prow[j]:
                    prow[j] *= inv
        nz = [j for j in range(total + 1) if prow[j]]
        for i in range(len(T)):
            if i != r:
                row = T[i]
                f = row[c]
                if f:
                    for j in nz:
                        row[j] -= f * prow[j]
        f = z[c]
        if f:
            for j in nz:
                z[j] -= f * prow[j]
        basis[r] = c

    def run(z, allowed):
        while True:
            enter = next((j for j in range(total) if allowed[j] and z[j] > 0), None)
            if enter is None:
                return "optimal"
            best, leave = None, None
            for i, row in enumerate(T):
                a = row[enter]
                if a > 0:
                    ratio = row[total] / a
                    if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                        best, leave = ratio, i
            if leave is None:
                return "unbounded"
            pivot(leave, enter, z)

    # phase 1
    if art_rows:
        z = reduced({c: Fraction(-1) for c in art_col.values()})
        run(z, [True] * total)
        if z[total] > 0:
            return LPSolution("infeasible", pivots=pivots)
        # drive artificial variables out of the basis
        for i in range(len(T)):
            if is_art[basis[i]]:
                j = next((j for j in range(total) if not is_art[j] and T[i][j] != 0), None)
                if j is not None:
                    pivot(i, j, z)
    allowed = [not a for a in is_art]
    cost = {j: sign * c for j, c in lp.objective.items()}
    z = reduced(cost)
    status = run(z, allowed)
    if status == "unbounded":
        return LPSolution("unbounded", pivots=pivots)
    x = [zero] * total
    for i, b in enumerate(basis):
        x[b] = T[i][total]
    obj = sum((c * x[j] for j, c in lp.objective.items()), zero)
    dual = {}
    for i, con in enumerate(lp.constraints):
        y = -z[unit_col[i]]
        if flips[i]:
            y = -y
        dual[con.name] = sign * y
    sol = LPSolution("optimal", obj, {lp.var_names[j]: x[j] for j in range(n)}, dual, pivots)
    if check:
        verify_solution(lp, sol)
    return sol


def verify_solution(lp: LinearProgram, sol: LPSolution):
    """Independent re-check of primal feasibility, dual feasibility and strong duality."""
    x = [sol.primal[v] for v in lp.var_names]
    if any(v < 0 for v in x):
        raise LPError("negative primal value")
    for con in lp.constraints:
        lhs = sum((c * x[i] for i, c in con.coeffs.items()), Fraction(0))
        if (con.op == LE and lhs > con.rhs) or (con.op == GE and lhs < con.rhs) or (con.op == EQ and lhs != con.rhs):
            raise LPError(f"primal row {con.name} violated")
    sgn = 1 if lp.sense == "max" else -1
    col = [Fraction(0)] * len(x)
    for con in lp.constraints:
        y = sol.dual[con.name]
        if con.op == LE and sgn * y < 0 or con.op == GE and sgn * y > 0:
            raise LPError(f"dual sign wrong on {con.name}")
        for i, c in con.coeffs.items():
            col[i] += c * y
    for i in range(len(x)):
        c = lp.objective.get(i, Fraction(0))
        if sgn * (col[i] - c) < 0:
            raise LPError(f"dual row for {lp.var_names[i]} violated")
    dobj = sum((con.rhs * sol.dual[con.name] for con in lp.constraints), Fraction(0))
    if dobj != sol.objective:
        raise LPError(f"duality gap {sol.objective} vs {dobj}")
