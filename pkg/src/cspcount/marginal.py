"""Truncated coupling decision trees, the feasibility LP, certified marginal ratios.

A tree is rooted at a pair of partial assignments differing in one variable.
Each node tracks the disagreement set, the frozen constraints (conditional
violation probability above the freezing threshold on either side) and the
dangerous variables these induce; branching assigns the lowest-numbered
eligible variable of the lowest-numbered constraint straddling the dangerous
set, over all value pairs. Good leaves admit an exact local ratio of
satisfying-completion counts; the LP ties leaf ratios together through flow
and coupling-error constraints, and a grid search over feasible ratio bounds
yields a certified interval for the true marginal ratio.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix, vstack

from . import kernels
from .errors import InternalError, RegimeError, ResourceError
from .model import DEFAULT_CAPS, PartialAssignment

LP_TOLERANCE = 1e-9


@dataclass
class CouplingNode:
    idx: int
    parent: int  # -1 at the root
    var: int  # variable assigned on the edge into this node (root: the split variable)
    aval: int
    bval: int
    vs_size: int
    vs_vars: frozenset
    disagree: frozenset
    frozen_cons: frozenset
    dangerous_vars: frozenset
    is_leaf: bool = False
    good: bool = False
    next_con: int = -1
    next_var: int = -1
    children: dict = None  # (a, b) -> child index
    nx: int = None  # good-leaf completion counts
    ny: int = None


class TruncatedTree:
    """Breadth-first materialization of the truncated coupling tree."""

    def __init__(self, inst, prefix, var, aval, bval, depth):
        self.inst = inst
        self.prefix = prefix
        self.var = var
        self.aval = aval
        self.bval = bval
        self.depth = depth
        self.ell = len(prefix) + 1
        self.nodes = []

    def bfs_order(self):
        return range(len(self.nodes))

    def _value(self, idx, v, side):
        while idx != -1:
            node = self.nodes[idx]
            if node.var == v:
                return node.aval if side == 0 else node.bval
            idx = node.parent
        return self.prefix.vals.get(v)

    def x_value(self, idx, v):
        return self._value(idx, v, 0)

    def y_value(self, idx, v):
        return self._value(idx, v, 1)

    def _values_dict(self, idx, side):
        vals = dict(self.prefix.vals)
        order = []
        while idx != -1:
            node = self.nodes[idx]
            vals[node.var] = node.aval if side == 0 else node.bval
            order.append(node.var)
            idx = node.parent
        return vals, tuple(self.prefix.order) + tuple(reversed(order))

    def x_assignment(self, idx):
        vals, order = self._values_dict(idx, 0)
        return PartialAssignment(vals, order)

    def y_assignment(self, idx):
        vals, order = self._values_dict(idx, 1)
        return PartialAssignment(vals, order)

    def good_leaves(self):
        return [n.idx for n in self.nodes if n.is_leaf and n.good]

    def bad_leaves(self):
        return [n.idx for n in self.nodes if n.is_leaf and not n.good]


def _cond_counts_at(inst, tree, idx, c, side):
    con = inst.constraints[c]
    value = tree.x_value if side == 0 else tree.y_value
    pattern = []
    den = 1
    for v in con.scope:
        a = value(idx, v)
        if a is None:
            pattern.append(-1)
            den *= inst.domain_sizes[v]
        else:
            pattern.append(a)
    num = kernels.count_rows(inst.tables[c], pattern)
    return num, den


def _exceeds(num, den, threshold):
    return num * threshold.denominator > den * threshold.numerator


def build_tree(inst, prefix, var, aval, bval, depth, p_freeze, caps=DEFAULT_CAPS):
    """Materialize the truncated coupling tree rooted at (prefix+var=aval, prefix+var=bval)."""
    if var in prefix.vals:
        raise ValueError("split variable %d already assigned" % var)
    if aval == bval:
        raise ValueError("the two root values must differ")
    for val in (aval, bval):
        if not 0 <= val < inst.domain_sizes[var]:
            raise ValueError("value %d out of domain of variable %d" % (val, var))
    tree = TruncatedTree(inst, prefix, var, aval, bval, depth)
    limit = tree.ell + depth

    def make_node(parent, v, a, b):
        idx = len(tree.nodes)
        if idx >= caps.tree_nodes:
            raise ResourceError(
                "coupling tree exceeds %d nodes at depth %d; lower the depth"
                % (caps.tree_nodes, depth)
            )
        if parent == -1:
            vs_vars = frozenset(prefix.vals) | {v}
            disagree = frozenset((v,)) if a != b else frozenset()
            node = CouplingNode(
                idx, parent, v, a, b, len(vs_vars), vs_vars, disagree,
                frozenset(), frozenset(),
            )
            tree.nodes.append(node)
            candidates = range(inst.m)
            prev_frozen = set()
            prev_dangerous = set(disagree)
        else:
            par = tree.nodes[parent]
            vs_vars = par.vs_vars | {v}
            disagree = par.disagree | ({v} if a != b else set())
            node = CouplingNode(
                idx, parent, v, a, b, par.vs_size + 1, vs_vars, disagree,
                frozenset(), frozenset(),
            )
            tree.nodes.append(node)
            candidates = inst.cons_with_var[v]
            prev_frozen = set(par.frozen_cons)
            prev_dangerous = set(par.dangerous_vars) | ({v} if a != b else set())
        newly = set()
        for c in candidates:
            if c in prev_frozen:
                continue
            numx, den = _cond_counts_at(inst, tree, idx, c, 0)
            if _exceeds(numx, den, p_freeze):
                newly.add(c)
                continue
            numy, _ = _cond_counts_at(inst, tree, idx, c, 1)
            if _exceeds(numy, den, p_freeze):
                newly.add(c)
        frozen = prev_frozen | newly
        dangerous = prev_dangerous
        for c in newly:
            dangerous |= inst.scopes[c] - vs_vars
        node.frozen_cons = frozenset(frozen)
        node.dangerous_vars = frozenset(dangerous)
        return node

    def classify(node):
        nc, nv = -1, -1
        for c in range(inst.m):
            s = inst.scopes[c]
            if s & node.dangerous_vars and s - node.dangerous_vars - node.vs_vars:
                nc = c
                nv = min(s - node.dangerous_vars - node.vs_vars)
                break
        if nc == -1:
            node.is_leaf = True
            node.good = node.vs_size <= limit - 1
        elif node.vs_size >= limit:
            node.is_leaf = True
            node.good = False
        else:
            node.next_con = nc
            node.next_var = nv
        return node

    queue = [classify(make_node(-1, var, aval, bval)).idx]
    while queue:
        nxt = []
        for idx in queue:
            node = tree.nodes[idx]
            if node.is_leaf:
                continue
            v = node.next_var
            node.children = {}
            for a in range(inst.domain_sizes[v]):
                for b in range(inst.domain_sizes[v]):
                    child = classify(make_node(idx, v, a, b))
                    node.children[(a, b)] = child.idx
                    nxt.append(child.idx)
        queue = nxt
    return tree


def leaf_counts(inst, tree, idx, caps=DEFAULT_CAPS):
    """Completion counts (N_x, N_y) over the unassigned dangerous variables of a good leaf.

    Counts assignments satisfying every constraint whose scope meets the
    dangerous set, under each side's values elsewhere; the remaining part of
    the instance is identical on both sides and cancels from the ratio.
    """
    node = tree.nodes[idx]
    if not (node.is_leaf and node.good):
        raise ValueError("node %d is not a good leaf" % idx)
    free = sorted(node.dangerous_vars - node.vs_vars)
    slots = {v: i for i, v in enumerate(free)}
    domains = [inst.domain_sizes[v] for v in free]
    touching = []
    for c in range(inst.m):
        s = inst.scopes[c]
        if s & node.dangerous_vars:
            if s - node.dangerous_vars - node.vs_vars:
                raise InternalError("leaf partition violated at node %d" % idx)
            touching.append(c)
    counts = []
    for side in (0, 1):
        fixed = {}
        value = tree.x_value if side == 0 else tree.y_value
        for c in touching:
            for v in inst.constraints[c].scope:
                if v not in slots:
                    fixed[v] = value(idx, v)
        projected = kernels.project_constraints(
            fixed, slots, [(inst.constraints[c].scope, inst.tables[c]) for c in touching]
        )
        counts.append(
            kernels.count_extensions(domains, projected, cap=caps.enumeration, what="leaf")
        )
    return counts[0], counts[1]


def leaf_ratio(inst, tree, idx, caps=DEFAULT_CAPS):
    """Exact local ratio at a good leaf: Fraction, math.inf, or None (0/0)."""
    nx, ny = leaf_counts(inst, tree, idx, caps=caps)
    if ny == 0:
        return math.inf if nx > 0 else None
    return Fraction(nx, ny)


class LPSystem:
    """The feasibility system over one truncated tree.

    Variables are paired reach probabilities per node, boxed to [0, 1]. Flow
    rows force each side's mass to split across a child value-pair row/column;
    coupling-error rows bound off-diagonal mass by 4*q*eta times the parent;
    good-leaf rows sandwich the local count ratio between the bounds under
    test (in multiplied-out linear form).
    """

    def __init__(self, tree, counts, q, eta):
        self.tree = tree
        self.counts = counts
        self.nvars = 2 * len(tree.nodes)
        self.eta4q = None if eta is None else 4 * q * eta
        eq_rows = []
        ub_rows = []
        root = tree.nodes[0]
        eq_rows.append(({self._px(0): Fraction(1)}, Fraction(1)))
        eq_rows.append(({self._py(0): Fraction(1)}, Fraction(1)))
        for node in tree.nodes:
            if node.is_leaf:
                continue
            dom = range(tree.inst.domain_sizes[node.next_var])
            for a in dom:
                row = {self._px(node.idx): Fraction(-1)}
                for b in dom:
                    row[self._px(node.children[(a, b)])] = Fraction(1)
                eq_rows.append((row, Fraction(0)))
                row = {self._py(node.idx): Fraction(-1)}
                for b in dom:
                    row[self._py(node.children[(b, a)])] = Fraction(1)
                eq_rows.append((row, Fraction(0)))
            if self.eta4q is not None:
                for a in dom:
                    row = {self._px(node.idx): -self.eta4q}
                    for b in dom:
                        if b != a:
                            row[self._px(node.children[(a, b)])] = Fraction(1)
                    ub_rows.append((row, Fraction(0)))
                    row = {self._py(node.idx): -self.eta4q}
                    for b in dom:
                        if b != a:
                            row[self._py(node.children[(b, a)])] = Fraction(1)
                    ub_rows.append((row, Fraction(0)))
        self._eq_rows = eq_rows
        self._eq = self._to_sparse(eq_rows)
        self._ub_fixed = ub_rows
        self._ub_fixed_sparse = self._to_sparse(ub_rows) if ub_rows else None
        self.solves = 0

    def _px(self, idx):
        return 2 * idx

    def _py(self, idx):
        return 2 * idx + 1

    @staticmethod
    def _scale_row(row, rhs):
        scale = max(max(abs(c) for c in row.values()), abs(rhs), Fraction(1))
        return {j: float(c / scale) for j, c in row.items()}, float(rhs / scale)

    def _to_sparse(self, rows):
        data, ri, ci, rhs = [], [], [], []
        for i, (row, b) in enumerate(rows):
            frow, fb = self._scale_row(row, b)
            rhs.append(fb)
            for j, cval in frow.items():
                ri.append(i)
                ci.append(j)
                data.append(cval)
        mat = csr_matrix((data, (ri, ci)), shape=(len(rows), self.nvars))
        return mat, np.array(rhs)

    def _ratio_rows(self, r_lo, r_hi):
        rows = []
        for idx in self.tree.good_leaves():
            nx, ny = self.counts[idx]
            px, py = self._px(idx), self._py(idx)
            if r_lo is not None and r_lo > 0:
                rows.append(({py: r_lo * ny, px: Fraction(-nx)}, Fraction(0)))
            if r_hi is not None:
                rows.append(({px: Fraction(nx), py: -r_hi * ny}, Fraction(0)))
        return rows

    def feasible(self, r_lo, r_hi):
        """Decide feasibility at the given ratio bounds (None means unbounded)."""
        rows = self._ratio_rows(r_lo, r_hi)
        if rows:
            extra, extra_rhs = self._to_sparse(rows)
            if self._ub_fixed_sparse is not None:
                a_ub = vstack([self._ub_fixed_sparse[0], extra])
                b_ub = np.concatenate([self._ub_fixed_sparse[1], extra_rhs])
            else:
                a_ub, b_ub = extra, extra_rhs
        elif self._ub_fixed_sparse is not None:
            a_ub, b_ub = self._ub_fixed_sparse
        else:
            a_ub, b_ub = None, None
        res = linprog(
            np.zeros(self.nvars),
            A_ub=a_ub,
            b_ub=b_ub,
            A_eq=self._eq[0],
            b_eq=self._eq[1],
            bounds=(0, 1),
            method="highs",
            options={
                "primal_feasibility_tolerance": LP_TOLERANCE,
                "dual_feasibility_tolerance": LP_TOLERANCE,
            },
        )
        self.solves += 1
        if res.status == 0:
            return True
        if res.status == 2:
            return False
        raise InternalError("LP solver returned status %d: %s" % (res.status, res.message))

    def check_point(self, px, py, r_lo, r_hi):
        """Exact feasibility of a candidate point, plus its worst scaled residual.

        px/py map node index -> Fraction. Returns (exact_ok, max_residual)
        where the residual is measured after the same row scaling the float
        solver sees.
        """
        values = {}
        for idx in range(len(self.tree.nodes)):
            values[self._px(idx)] = px[idx]
            values[self._py(idx)] = py[idx]
        ok = all(0 <= values[j] <= 1 for j in values)
        worst = 0.0
        for row, rhs in self._eq_rows:
            lhs = sum(c * values[j] for j, c in row.items())
            if lhs != rhs:
                ok = False
            scale = max(max(abs(c) for c in row.values()), abs(rhs), Fraction(1))
            worst = max(worst, abs(float((lhs - rhs) / scale)))
        for row, rhs in self._ub_fixed + self._ratio_rows(r_lo, r_hi):
            lhs = sum(c * values[j] for j, c in row.items())
            if lhs > rhs:
                ok = False
                scale = max(max(abs(c) for c in row.values()), abs(rhs), Fraction(1))
                worst = max(worst, abs(float((lhs - rhs) / scale)))
        return ok, worst


class RatioGrid:
    """Geometric grid on [q^-n, q^n] with step 1 + eps/(8n)."""

    def __init__(self, q, n, eps):
        n = max(1, n)
        self.step = 1 + Fraction(eps) / (8 * n)
        self.base = Fraction(1, q**n)
        self.top_value = Fraction(q**n)
        self._log_step = math.log(self.step)
        self._log_base = math.log(self.base)
        self._powers = {0: self.base}
        j = int(math.ceil((math.log(self.top_value) - self._log_base) / self._log_step))
        while self.value(j) < self.top_value:
            j += 1
        while j > 0 and self.value(j - 1) >= self.top_value:
            j -= 1
        self.top_index = j

    def value(self, j):
        if j not in self._powers:
            self._powers[j] = self.base * self.step**j
        return self._powers[j]

    def _estimate_index(self, x):
        fx = float(x)
        if fx <= 0:
            return 0
        return int((math.log(fx) - self._log_base) / self._log_step)

    def ceil_index(self, x):
        """Least grid index with value >= x, or None when x exceeds the top."""
        j = max(0, min(self.top_index, self._estimate_index(x)))
        while j > 0 and self.value(j - 1) >= x:
            j -= 1
        while j <= self.top_index and self.value(j) < x:
            j += 1
        return j if j <= self.top_index else None

    def floor_index(self, x):
        """Greatest grid index with value <= x, or None when x is below the base."""
        j = max(0, min(self.top_index, self._estimate_index(x)))
        while j < self.top_index and self.value(j + 1) <= x:
            j += 1
        while j >= 0 and self.value(j) > x:
            j -= 1
        return j if j >= 0 else None


@dataclass
class RatioInterval:
    """Certified bracket for a marginal ratio.

    The binary-search bracket is [r_lo, r_hi] (r_lo may be 0, r_hi None for
    unbounded); the certified statement widens it to
    [(1-err)*r_lo, (1+err)*r_hi].
    """

    r_lo: Fraction
    r_hi: Fraction  # None = unbounded above
    lo_index: int  # grid index, or None when r_lo == 0
    hi_index: int  # grid index, or None when r_hi is None
    err: Fraction
    tree_nodes: int = 0
    good_leaves: int = 0
    bad_leaves: int = 0
    lp_solves: int = 0

    def certified_lo(self):
        lo = (1 - self.err) * self.r_lo
        return lo if lo > 0 else Fraction(0)

    def certified_hi(self):
        if self.r_hi is None:
            return None
        return (1 + self.err) * self.r_hi


def certify_ratio(inst, prefix, var, num_value, den_value, params, caps=DEFAULT_CAPS,
                  mode="refined", grid=None, collect_tree=None):
    """Certify bounds for |S(prefix+var=num_value)| / |S(prefix+var=den_value)|.

    Builds the truncated tree, computes good-leaf count ratios, and grid
    searches the least feasible upper bound and greatest feasible lower bound
    of the LP. Single-node trees short-circuit to the exact leaf ratio (the
    LP on one node forces exactly that comparison).
    """
    if grid is None:
        grid = RatioGrid(inst.q, inst.n, params.eps)
    tree = build_tree(inst, prefix, var, num_value, den_value, params.depth,
                      params.p_freeze, caps=caps)
    if collect_tree is not None:
        collect_tree.append(tree)
    counts = {idx: leaf_counts(inst, tree, idx, caps=caps) for idx in tree.good_leaves()}
    err = params.certified_err(inst.n, mode)
    stats = dict(
        tree_nodes=len(tree.nodes),
        good_leaves=len(tree.good_leaves()),
        bad_leaves=len(tree.bad_leaves()),
    )

    if len(tree.nodes) == 1 and tree.nodes[0].good:
        nx, ny = counts[0]
        if ny == 0 and nx == 0:
            lo_idx, hi_idx = grid.top_index, 0
        elif ny == 0:
            lo_idx, hi_idx = grid.top_index, None
        elif nx == 0:
            lo_idx, hi_idx = None, 0
        else:
            rho = Fraction(nx, ny)
            hi_idx = grid.ceil_index(rho)
            lo_idx = grid.floor_index(rho)
        return RatioInterval(
            Fraction(0) if lo_idx is None else grid.value(lo_idx),
            None if hi_idx is None else grid.value(hi_idx),
            lo_idx,
            hi_idx,
            err,
            lp_solves=0,
            **stats,
        )

    lp = LPSystem(tree, counts, inst.q, params.eta)

    if not lp.feasible(None, None):
        raise RegimeError("coupling LP infeasible even with unconstrained ratio bounds")

    if lp.feasible(None, grid.value(grid.top_index)):
        lo, hi = 0, grid.top_index
        while lo < hi:
            mid = (lo + hi) // 2
            if lp.feasible(None, grid.value(mid)):
                hi = mid
            else:
                lo = mid + 1
        hi_idx = lo
    else:
        hi_idx = None

    if lp.feasible(grid.value(0), None):
        lo, hi = 0, grid.top_index
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if lp.feasible(grid.value(mid), None):
                lo = mid
            else:
                hi = mid - 1
        lo_idx = lo
    else:
        lo_idx = None

    return RatioInterval(
        Fraction(0) if lo_idx is None else grid.value(lo_idx),
        None if hi_idx is None else grid.value(hi_idx),
        lo_idx,
        hi_idx,
        err,
        lp_solves=lp.solves,
        **stats,
    )


@dataclass
class MarginalEstimate:
    var: int
    anchor: int
    est: dict  # value -> Fraction, sums to exactly 1
    lo: dict  # bracket bounds (no theoretical widening)
    hi: dict
    certified_lo: dict  # widened by the mode's certified error
    certified_hi: dict
    ratios: dict  # value b != anchor -> RatioInterval
    tv_bound: Fraction


class MarginalEstimator:
    """Shared grid plus memoized ratio certificates and marginal estimates."""

    def __init__(self, inst, params, caps=DEFAULT_CAPS, mode="refined"):
        self.inst = inst
        self.params = params
        self.caps = caps
        self.mode = mode
        self.grid = RatioGrid(inst.q, inst.n, params.eps)
        self._ratio_cache = {}
        self._est_cache = {}

    def certify(self, prefix, var, num_value, den_value):
        key = (prefix.key(), var, num_value, den_value)
        if key not in self._ratio_cache:
            self._ratio_cache[key] = certify_ratio(
                self.inst, prefix, var, num_value, den_value, self.params,
                caps=self.caps, mode=self.mode, grid=self.grid,
            )
        return self._ratio_cache[key]

    def estimate(self, prefix, var):
        key = (prefix.key(), var)
        if key not in self._est_cache:
            self._est_cache[key] = self._estimate(prefix, var)
        return self._est_cache[key]

    def _estimate(self, prefix, var):
        qv = self.inst.domain_sizes[var]
        chosen = None
        for anchor in range(qv):
            ratios = {
                b: self.certify(prefix, var, b, anchor)
                for b in range(qv)
                if b != anchor
            }
            degenerate = any(
                iv.hi_index is None or iv.lo_index == self.grid.top_index
                for iv in ratios.values()
            )
            if not degenerate:
                chosen = (anchor, ratios)
                break
        if chosen is None:
            raise RegimeError(
                "no anchor value for variable %d has certified nonzero mass" % var
            )
        anchor, ratios = chosen
        rho = {}
        for b, iv in ratios.items():
            if iv.lo_index is None:
                rho[b] = Fraction(0)
            else:
                rho[b] = self.grid.value((iv.lo_index + iv.hi_index) // 2)
        est = {anchor: 1 / (1 + sum(rho.values(), Fraction(0)))}
        for b in rho:
            est[b] = rho[b] * est[anchor]

        lo_r = {b: ratios[b].r_lo for b in rho}
        hi_r = {b: ratios[b].r_hi for b in rho}
        clo_r = {b: ratios[b].certified_lo() for b in rho}
        chi_r = {b: ratios[b].certified_hi() for b in rho}

        def bounds(lo_map, hi_map):
            lo = {anchor: 1 / (1 + sum(hi_map.values(), Fraction(0)))}
            hi = {anchor: 1 / (1 + sum(lo_map.values(), Fraction(0)))}
            for b in rho:
                rest_hi = sum(hi_map[c] for c in rho if c != b)
                rest_lo = sum(lo_map[c] for c in rho if c != b)
                lo[b] = lo_map[b] / (1 + lo_map[b] + rest_hi)
                hi[b] = hi_map[b] / (1 + hi_map[b] + rest_lo)
            return lo, hi

        lo, hi = bounds(lo_r, hi_r)
        clo, chi = bounds(clo_r, chi_r)
        tv = sum((hi[a] - lo[a] for a in est), Fraction(0)) / 2
        return MarginalEstimate(var, anchor, est, lo, hi, clo, chi, ratios, tv)


def estimate_marginal(inst, prefix, var, params, caps=DEFAULT_CAPS, mode="refined",
                      estimator=None):
    """Certified distribution estimate for one variable given a prefix."""
    if estimator is None:
        estimator = MarginalEstimator(inst, params, caps=caps, mode=mode)
    return estimator.estimate(prefix, var)
