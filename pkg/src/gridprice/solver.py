"""Solver-facing problem representation, solve contract, and KKT checks.

A ProblemSpec is an explicit sparse LP/QP in *maximization* form: variables
with bounds, linear constraints addressed by stable symbolic names, and a
linear + (negative-semidefinite) quadratic objective. Balance rows carry a
PRICE tag and storage balances an MSV tag so that shadow prices can be pulled
out by name after solving.

Dual convention stored in a SolutionBundle: duals ``y`` satisfy the
minimization-form stationarity  grad f_min(x) + A^T y + mu_up - mu_lo = 0 with
y >= 0 on "<=" rows, y <= 0 on ">=" rows, y free on "==" rows, and
mu_lo, mu_up >= 0 the reduced costs of the variable bounds. Balance rows are
written with demand entering positively, so scarcity gives positive prices.

The backend is pluggable: any convex QP method returning Lagrange multipliers
qualifies. The default is Clarabel's interior-point method (no crossover);
"scipy" selects HiGHS through scipy.optimize.linprog for LPs only.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

PRICE = "PRICE"
MSV = "MSV"
CAP = "CAP"
OTHER = "OTHER"

_SENSES = ("==", "<=", ">=")


class SolveFailedError(RuntimeError):
    """A solve did not reach optimality where the caller required it."""

    def __init__(self, message: str, status: str = "numeric_failure", info=None):
        super().__init__(message)
        self.status = status
        self.info = info or {}


@dataclass(frozen=True)
class RowTag:
    kind: str = OTHER
    key: tuple = ()


@dataclass
class Variable:
    """Bounded variable with maximize-form objective coefficients.

    ``quadratic`` is the coefficient on x**2 (must be <= 0 so the welfare
    objective stays concave).
    """

    name: str
    lower: float = 0.0
    upper: float = math.inf
    linear: float = 0.0
    quadratic: float = 0.0


@dataclass
class Constraint:
    """Sparse row a.x (sense) rhs; ``dual_scale`` divides the raw dual on
    extraction (snapshot weight for PRICE/MSV rows, so units are EUR/MWh)."""

    name: str
    coeffs: dict
    sense: str
    rhs: float
    tag: RowTag = field(default_factory=RowTag)
    dual_scale: float = 1.0


@dataclass
class _Compiled:
    n: int
    names: list
    q: np.ndarray              # minimization-form linear cost
    P: sparse.csc_matrix       # minimization-form quadratic (PSD), may be empty
    A_eq: sparse.csc_matrix
    b_eq: np.ndarray
    eq_names: list
    A_ub: sparse.csc_matrix    # all inequalities as <=, includes flipped >= rows
    b_ub: np.ndarray
    ub_names: list
    ub_flip: np.ndarray        # +1 for native <=, -1 for flipped >=
    lb: np.ndarray
    ub: np.ndarray

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.q, self.b_eq, self.b_ub, self.lb, self.ub, self.ub_flip):
            h.update(np.ascontiguousarray(a).tobytes())
        for m in (self.P, self.A_eq, self.A_ub):
            m = m.tocsc()
            h.update(m.indptr.tobytes())
            h.update(m.indices.tobytes())
            h.update(m.data.tobytes())
        return h.hexdigest()


@dataclass
class ProblemSpec:
    """Explicit sparse LP/QP with named rows and columns (maximize welfare)."""

    variables: list
    constraints: list
    bilinear: list = field(default_factory=list)  # (name_i, name_j, coeff) on x_i*x_j, maximize form
    constant: float = 0.0   # maximize-form constant dropped from the solver objective
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index = {v.name: i for i, v in enumerate(self.variables)}
        if len(self._index) != len(self.variables):
            raise ValueError("variable names must be unique")
        row_names = set()
        tags = set()
        for c in self.constraints:
            if c.name in row_names:
                raise ValueError(f"duplicate constraint name {c.name}")
            row_names.add(c.name)
            if c.sense not in _SENSES:
                raise ValueError(f"unknown sense {c.sense!r} in {c.name}")
            if c.tag.kind != OTHER:
                sig = (c.tag.kind, c.tag.key)
                if sig in tags:
                    raise ValueError(f"duplicate tag {sig} on {c.name}")
                tags.add(sig)
            for name in c.coeffs:
                if name not in self._index:
                    raise ValueError(f"row {c.name} references unknown variable {name}")
        for v in self.variables:
            if v.quadratic > 1e-12:
                raise ValueError(f"{v.name}: quadratic objective must be concave")
            if v.lower > v.upper:
                raise ValueError(f"{v.name}: lower bound above upper bound")
        self._row_index = {c.name: c for c in self.constraints}
        self._compiled = None

    def variable_index(self, name: str) -> int:
        return self._index[name]

    def constraint(self, name: str) -> Constraint:
        return self._row_index[name]

    def rows_tagged(self, kind: str) -> list:
        return [c for c in self.constraints if c.tag.kind == kind]

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    def compile(self) -> _Compiled:
        if self._compiled is not None:
            return self._compiled
        n = len(self.variables)
        names = [v.name for v in self.variables]
        q = np.array([-v.linear for v in self.variables], dtype=float)
        lb = np.array([v.lower for v in self.variables], dtype=float)
        ub = np.array([v.upper for v in self.variables], dtype=float)

        rows_p, cols_p, vals_p = [], [], []
        for i, v in enumerate(self.variables):
            if v.quadratic != 0.0:
                rows_p.append(i)
                cols_p.append(i)
                vals_p.append(-2.0 * v.quadratic)      # P = 2 * min-form Hessian half
        for a, b, coeff in self.bilinear:
            i, j = self._index[a], self._index[b]
            if i == j:
                raise ValueError("bilinear entries must couple distinct variables")
            rows_p.extend((i, j))
            cols_p.extend((j, i))
            vals_p.extend((-coeff, -coeff))
        P = sparse.csc_matrix((vals_p, (rows_p, cols_p)), shape=(n, n))
        if self.bilinear:
            _require_psd(P)

        def assemble(rows):
            ri, ci, vv, rhs = [], [], [], []
            for k, (c, sign) in enumerate(rows):
                rhs.append(sign * c.rhs)
                for name, coeff in c.coeffs.items():
                    ri.append(k)
                    ci.append(self._index[name])
                    vv.append(sign * coeff)
            mat = sparse.csc_matrix((vv, (ri, ci)), shape=(len(rows), n))
            return mat, np.array(rhs, dtype=float)

        eq_rows = [(c, 1.0) for c in self.constraints if c.sense == "=="]
        ub_rows = [(c, 1.0) if c.sense == "<=" else (c, -1.0)
                   for c in self.constraints if c.sense != "=="]
        A_eq, b_eq = assemble(eq_rows)
        A_ub, b_ub = assemble(ub_rows)
        self._compiled = _Compiled(
            n=n, names=names, q=q, P=P,
            A_eq=A_eq, b_eq=b_eq, eq_names=[c.name for c, _ in eq_rows],
            A_ub=A_ub, b_ub=b_ub, ub_names=[c.name for c, _ in ub_rows],
            ub_flip=np.array([s for _, s in ub_rows]), lb=lb, ub=ub)
        return self._compiled

    def content_hash(self) -> str:
        return self.compile().digest()


def _require_psd(P: sparse.csc_matrix, tol: float = 1e-8) -> None:
    """Reject bilinear objectives that break concavity of the welfare form."""
    scale = max(1.0, abs(P.data).max() if P.nnz else 0.0)
    if P.shape[0] <= 64:
        smallest = float(np.linalg.eigvalsh(P.toarray())[0])
    else:
        from scipy.sparse.linalg import eigsh

        smallest = float(eigsh(P, k=1, which="SA",
                               return_eigenvectors=False)[0])
    if smallest < -tol * scale:
        raise ValueError(
            f"quadratic objective is not concave (min eigenvalue {smallest:.3e})")


@dataclass
class SolutionBundle:
    """Primal and dual solution of one ProblemSpec (immutable by convention)."""

    status: str                       # optimal | infeasible | unbounded | numeric_failure
    objective: float | None           # maximize-form value, excludes ProblemSpec.constant
    primal: dict
    duals: dict                       # per constraint name, see module docstring
    reduced_lower: dict               # mu for x >= lower, >= 0
    reduced_upper: dict               # mu for x <= upper, >= 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def require_optimal(self, context: str = "") -> "SolutionBundle":
        if not self.optimal:
            raise SolveFailedError(
                f"solve did not reach optimality ({self.status}) {context}".strip(),
                status=self.status, info=self.info)
        return self


@dataclass(frozen=True)
class SolveOptions:
    solver: str = "clarabel"
    barrier_tolerance: float = 1e-10
    dual_tolerance: float = 1e-7
    max_iterations: int = 500
    threads: int | None = None
    cache: bool = True
    verbose: bool = False

    def resolved_threads(self) -> int | None:
        if self.threads is not None:
            return self.threads
        env = os.environ.get("GRIDPRICE_SOLVER_THREADS")
        return int(env) if env else None


_CACHE: OrderedDict = OrderedDict()
_CACHE_LIMIT = 64


def clear_cache() -> None:
    _CACHE.clear()


def solve(problem: ProblemSpec, options: SolveOptions | None = None) -> SolutionBundle:
    """Solve a ProblemSpec, returning primal values and duals for every row.

    Infeasible/unbounded problems surface as the bundle status, never as
    silent defaults; solver exceptions map to status "numeric_failure" with
    diagnostics in ``info``.
    """
    options = options or SolveOptions()
    if problem.n_variables == 0:
        return SolutionBundle("optimal", 0.0, {}, {}, {}, {}, {"solver": "trivial"})
    compiled = problem.compile()
    key = (compiled.digest(), options.solver, options.barrier_tolerance,
           options.max_iterations)
    if options.cache and key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]

    if options.solver == "clarabel":
        bundle = _solve_clarabel(problem, compiled, options)
    elif options.solver == "scipy":
        bundle = _solve_scipy(problem, compiled, options)
    else:
        raise ValueError(f"unknown solver backend {options.solver!r}")

    if options.cache and bundle.status == "optimal":
        _CACHE[key] = bundle
        while len(_CACHE) > _CACHE_LIMIT:
            _CACHE.popitem(last=False)
    return bundle


def _bound_rows(compiled: _Compiled):
    """Finite bounds as sparse <= rows: (-x <= -lb) then (x <= ub)."""
    n = compiled.n
    il = np.where(np.isfinite(compiled.lb))[0]
    iu = np.where(np.isfinite(compiled.ub))[0]
    L = sparse.csc_matrix((-np.ones(len(il)), (np.arange(len(il)), il)), shape=(len(il), n))
    U = sparse.csc_matrix((np.ones(len(iu)), (np.arange(len(iu)), iu)), shape=(len(iu), n))
    return il, iu, L, -compiled.lb[il], U, compiled.ub[iu]


def _solve_clarabel(problem, compiled, options) -> SolutionBundle:
    import clarabel

    il, iu, L, bl, U, bu = _bound_rows(compiled)
    A = sparse.vstack([compiled.A_eq, compiled.A_ub, L, U], format="csc")
    b = np.concatenate([compiled.b_eq, compiled.b_ub, bl, bu])
    cones = []
    if compiled.A_eq.shape[0]:
        cones.append(clarabel.ZeroConeT(compiled.A_eq.shape[0]))
    n_ineq = compiled.A_ub.shape[0] + len(il) + len(iu)
    if n_ineq:
        cones.append(clarabel.NonnegativeConeT(n_ineq))

    settings = clarabel.DefaultSettings()
    settings.verbose = options.verbose
    tol = options.barrier_tolerance
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.max_iter = options.max_iterations
    threads = options.resolved_threads()
    if threads:
        settings.max_threads = threads
    try:
        solver = clarabel.DefaultSolver(compiled.P.tocsc(), compiled.q, A, b,
                                        cones, settings)
        sol = solver.solve()
    except BaseException as exc:  # clarabel raises pyo3 exceptions
        return SolutionBundle("numeric_failure", None, {}, {}, {}, {},
                              {"solver": "clarabel", "error": repr(exc)})

    status = str(sol.status)
    info = {"solver": "clarabel", "status": status, "iterations": sol.iterations,
            "solve_time": sol.solve_time}
    if status.startswith("PrimalInfeasible"):
        return SolutionBundle("infeasible", None, {}, {}, {}, {}, info)
    if status.startswith("DualInfeasible"):
        return SolutionBundle("unbounded", None, {}, {}, {}, {}, info)
    if status not in ("Solved", "AlmostSolved"):
        return SolutionBundle("numeric_failure", None, {}, {}, {}, {}, info)
    if status == "AlmostSolved":
        # usable but below the requested tolerance; the KKT report is the gate
        info["reduced_accuracy"] = True
        log.warning("clarabel stopped at reduced accuracy after %d iterations; "
                    "check the KKT report", sol.iterations)

    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    m_eq = compiled.A_eq.shape[0]
    m_ub = compiled.A_ub.shape[0]
    y_eq = z[:m_eq]
    y_ub = z[m_eq:m_eq + m_ub]
    y_lo = z[m_eq + m_ub:m_eq + m_ub + len(il)]
    y_up = z[m_eq + m_ub + len(il):]

    return _bundle_from_arrays(problem, compiled, x, y_eq, y_ub, il, y_lo, iu, y_up, info)


def _solve_scipy(problem, compiled, options) -> SolutionBundle:
    from scipy.optimize import linprog

    if compiled.P.nnz:
        raise ValueError("the scipy backend handles LPs only; use clarabel for QPs")
    res = linprog(
        compiled.q,
        A_ub=compiled.A_ub if compiled.A_ub.shape[0] else None,
        b_ub=compiled.b_ub if compiled.A_ub.shape[0] else None,
        A_eq=compiled.A_eq if compiled.A_eq.shape[0] else None,
        b_eq=compiled.b_eq if compiled.A_eq.shape[0] else None,
        bounds=np.column_stack([
            np.where(np.isfinite(compiled.lb), compiled.lb, -np.inf),
            np.where(np.isfinite(compiled.ub), compiled.ub, np.inf)]),
        method="highs")
    info = {"solver": "scipy-highs", "status": int(res.status),
            "message": res.message}
    if res.status == 2:
        return SolutionBundle("infeasible", None, {}, {}, {}, {}, info)
    if res.status == 3:
        return SolutionBundle("unbounded", None, {}, {}, {}, {}, info)
    if res.status != 0:
        return SolutionBundle("numeric_failure", None, {}, {}, {}, {}, info)

    # scipy marginals are d(obj)/d(rhs); our convention is L = f + y(Ax - b),
    # so equality/inequality duals flip sign and bound reduced costs map to
    # mu_lo = lower.marginals >= 0, mu_up = -upper.marginals >= 0.
    x = res.x
    y_eq = -res.eqlin.marginals if compiled.A_eq.shape[0] else np.zeros(0)
    y_ub = -res.ineqlin.marginals if compiled.A_ub.shape[0] else np.zeros(0)
    il = np.arange(compiled.n)
    y_lo = np.maximum(res.lower.marginals, 0.0)
    y_up = np.maximum(-res.upper.marginals, 0.0)
    return _bundle_from_arrays(problem, compiled, x, y_eq, y_ub, il, y_lo,
                               il, y_up, info)


def _bundle_from_arrays(problem, compiled, x, y_eq, y_ub, il, y_lo, iu, y_up,
                        info) -> SolutionBundle:
    primal = {name: float(val) for name, val in zip(compiled.names, x)}
    duals = {}
    for name, y in zip(compiled.eq_names, y_eq):
        duals[name] = float(y)
    for name, y, flip in zip(compiled.ub_names, y_ub, compiled.ub_flip):
        # flipped ">=" rows report their dual in original orientation (<= 0)
        duals[name] = float(flip * y)
    mu_lo = dict.fromkeys(compiled.names, 0.0)
    mu_up = dict.fromkeys(compiled.names, 0.0)
    for idx, y in zip(il, y_lo):
        mu_lo[compiled.names[idx]] = float(max(y, 0.0))
    for idx, y in zip(iu, y_up):
        mu_up[compiled.names[idx]] = float(max(y, 0.0))
    obj_min = float(compiled.q @ x + 0.5 * (x @ (compiled.P @ x)))
    return SolutionBundle("optimal", -obj_min, primal, duals, mu_lo, mu_up, info)


# ---------------------------------------------------------------------------
# Dual series extraction
# ---------------------------------------------------------------------------

def _tagged_series(solution: SolutionBundle, problem: ProblemSpec, kind: str,
                   key_filter=None) -> np.ndarray:
    rows = problem.rows_tagged(kind)
    if key_filter is not None:
        rows = [c for c in rows if key_filter(c.tag.key)]
    if not rows:
        raise KeyError(f"problem has no {kind}-tagged rows matching the filter")
    rows.sort(key=lambda c: c.tag.key[-1])
    return np.array([solution.duals[c.name] / c.dual_scale for c in rows])


def extract_price_series(solution: SolutionBundle, problem: ProblemSpec) -> np.ndarray:
    """Electricity price per snapshot in EUR/MWh (weight-normalized dual)."""
    solution.require_optimal("while extracting prices")
    return _tagged_series(solution, problem, PRICE)


def extract_msv_series(solution: SolutionBundle, problem: ProblemSpec,
                       storage: str) -> np.ndarray:
    """Marginal storage value per snapshot in EUR/MWh of storage medium."""
    solution.require_optimal("while extracting storage values")
    return _tagged_series(solution, problem, MSV, lambda key: key[0] == storage)


# ---------------------------------------------------------------------------
# KKT verification
# ---------------------------------------------------------------------------

_CLASS_PREFIXES = (
    ("g[", "generation"),
    ("f[", "discharge"),
    ("h[", "charge"),
    ("d[", "demand"),
    ("shed[", "demand"),
    ("e[", "soc"),
    ("cap[", "capacity"),
)


def _variable_class(name: str) -> str:
    for prefix, cls in _CLASS_PREFIXES:
        if name.startswith(prefix):
            return cls
    return "other"


@dataclass
class KktReport:
    """Scaled first-order optimality residuals; violations are data, not errors.

    ``stationarity`` holds the max scaled residual per variable class
    (generation, discharge, demand, charge, soc, capacity). ``zero_profit``
    holds, per capacity variable, the scaled mismatch between its annualized
    fixed cost and the capacity-row duals it collects — without the help of
    any forced-capacity bound, so out-of-equilibrium assets show up here.
    """

    stationarity: dict
    complementarity: float
    zero_profit: dict

    @property
    def max_stationarity(self) -> float:
        return max(self.stationarity.values(), default=0.0)

    def within(self, tol: float) -> bool:
        return self.max_stationarity <= tol and self.complementarity <= tol

    def summary(self) -> dict:
        return {"stationarity": dict(self.stationarity),
                "complementarity": self.complementarity,
                "zero_profit": dict(self.zero_profit),
                "max_stationarity": self.max_stationarity}


def verify_kkt(problem: ProblemSpec, solution: SolutionBundle,
               tol: float = 1e-5) -> KktReport:
    """Check stationarity, complementary slackness, and LT zero profit.

    Residuals are scaled by the magnitude of the terms entering each
    condition, so ``1e-5`` means "five digits beyond the economics".
    """
    solution.require_optimal("before KKT verification")
    compiled = problem.compile()
    x = np.array([solution.primal[n] for n in compiled.names])
    y_eq = np.array([solution.duals[n] for n in compiled.eq_names])
    y_ub = np.array([solution.duals[n] for n in compiled.ub_names]) * compiled.ub_flip
    mu_lo = np.array([solution.reduced_lower[n] for n in compiled.names])
    mu_up = np.array([solution.reduced_upper[n] for n in compiled.names])

    grad = compiled.q + compiled.P @ x
    eq_term = compiled.A_eq.T @ y_eq
    ub_term = compiled.A_ub.T @ y_ub
    residual = grad + eq_term + ub_term + mu_up - mu_lo
    scale = np.maximum.reduce([
        np.ones_like(residual), np.abs(grad), np.abs(eq_term), np.abs(ub_term),
        mu_up, mu_lo])
    scaled = np.abs(residual) / scale

    stationarity: dict = {}
    for name, r in zip(compiled.names, scaled):
        cls = _variable_class(name)
        stationarity[cls] = max(stationarity.get(cls, 0.0), float(r))

    # complementary slackness on inequality rows and finite bounds
    comp = 0.0
    if compiled.A_ub.shape[0]:
        slack = compiled.b_ub - compiled.A_ub @ x
        prod = np.abs(y_ub * slack)
        comp_rows = prod / np.maximum.reduce([np.ones_like(prod), np.abs(y_ub), np.abs(slack)])
        comp = float(comp_rows.max())
    for arr, mu in ((x - compiled.lb, mu_lo), (compiled.ub - x, mu_up)):
        fin = np.isfinite(arr)
        prod = np.abs(mu[fin] * arr[fin])
        if prod.size:
            denom = np.maximum.reduce([np.ones_like(prod), mu[fin], np.abs(arr[fin])])
            comp = max(comp, float((prod / denom).max()))

    # zero profit: capacity-variable stationarity without its own bound duals
    zero_profit = {}
    for name in compiled.names:
        if not name.startswith("cap["):
            continue
        i = problem.variable_index(name)
        r = grad[i] + eq_term[i] + ub_term[i]
        zero_profit[name] = float(abs(r) / max(1.0, abs(grad[i])))

    return KktReport(stationarity, comp, zero_profit)


# ---------------------------------------------------------------------------
# LP-format text dump for cross-checking against external solvers
# ---------------------------------------------------------------------------

def dump_lp(problem: ProblemSpec, path) -> None:
    """Write the problem in CPLEX LP text format (maximization form)."""

    def num(v: float) -> str:
        return repr(float(v))

    def clean(name: str) -> str:
        return name.replace("[", "(").replace("]", ")").replace(",", "_").replace(":", ".")

    lines = ["\\ gridprice problem dump", "Maximize", " obj:"]
    terms = []
    for v in problem.variables:
        if v.linear:
            terms.append(f" {'+' if v.linear >= 0 else '-'} {num(abs(v.linear))} {clean(v.name)}")
    lines.append("".join(terms) if terms else " 0 dummy_zero")
    quad = [(v.name, v.name, v.quadratic) for v in problem.variables if v.quadratic]
    quad += [(a, b, c) for a, b, c in problem.bilinear]
    if quad:
        qterms = []
        for a, b, c in quad:
            coeff = 2.0 * c   # LP format divides the bracket by 2
            sign = "+" if coeff >= 0 else "-"
            if a == b:
                qterms.append(f" {sign} {num(abs(coeff))} {clean(a)} ^ 2")
            else:
                qterms.append(f" {sign} {num(abs(coeff))} {clean(a)} * {clean(b)}")
        lines.append(" + [" + "".join(qterms) + " ] / 2")
    lines.append("Subject To")
    for c in problem.constraints:
        row = []
        for name, coeff in c.coeffs.items():
            row.append(f" {'+' if coeff >= 0 else '-'} {num(abs(coeff))} {clean(name)}")
        op = {"==": "=", "<=": "<=", ">=": ">="}[c.sense]
        lines.append(f" {clean(c.name)}:{''.join(row)} {op} {num(c.rhs)}")
    lines.append("Bounds")
    for v in problem.variables:
        lo = "-inf" if not math.isfinite(v.lower) else num(v.lower)
        hi = "+inf" if not math.isfinite(v.upper) else num(v.upper)
        lines.append(f" {lo} <= {clean(v.name)} <= {hi}")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
