"""Guiding partial assignments.

The greedy pass assigns variables in input order; once a constraint's
conditional violation probability crosses the freezing threshold, its
remaining variables are frozen and never assigned. The derandomized modes
replace the random value choice by minimizing a potential over {2,3}-tree
families, which keeps the frozen constraints' components small.
"""

import random
import warnings
from dataclasses import dataclass
from fractions import Fraction

from . import oracle
from .depgraph import build_line_graph, enumerate_23_trees, frozen_components
from .errors import RegimeError, UnsatError
from .model import DEFAULT_CAPS, PartialAssignment, check_conditions, cond_violation_prob


@dataclass
class GuideResult:
    mode: str
    trace: list  # partial assignments, one per stage
    dangerous: frozenset  # constraints ever declared dangerous
    frozen_vars: frozenset
    potential_trace: list  # H values, length len(trace)+1; None for randomized runs
    stage_dangerous: list
    stage_available: list
    stage_frozen: list

    def final(self):
        return self.trace[-1] if self.trace else PartialAssignment.empty()


def _initial_probs(inst):
    return {c: inst.cons_prob[c] for c in range(inst.m)}


def _run(inst, p_threshold, choose, potential=None):
    avail = set(range(inst.n))
    frozen = set()
    dangerous = set()
    x = PartialAssignment.empty()
    probs = _initial_probs(inst)
    trace, st_d, st_a, st_f = [], [], [], []
    pot_trace = [potential(probs)] if potential else None
    while avail:
        v = min(avail)
        a = choose(x, v, probs)
        x = x.extend(v, a)
        for c in inst.cons_with_var[v]:
            probs[c] = cond_violation_prob(inst, c, x)
        danger_now = {c for c in range(inst.m) if probs[c] > p_threshold}
        dangerous |= danger_now
        for c in danger_now:
            frozen |= inst.scopes[c] - x.vals.keys()
        avail -= frozen
        avail.discard(v)
        trace.append(x)
        st_d.append(frozenset(danger_now))
        st_a.append(frozenset(avail))
        st_f.append(frozenset(frozen))
        if potential:
            pot_trace.append(potential(probs))
    return GuideResult(
        mode="",
        trace=trace,
        dangerous=frozenset(dangerous),
        frozen_vars=frozenset(frozen),
        potential_trace=pot_trace,
        stage_dangerous=st_d,
        stage_available=st_a,
        stage_frozen=st_f,
    )


def greedy_randomized(inst, p_guide, seed, value_source="uniform", caps=DEFAULT_CAPS):
    """Randomized guiding pass.

    value_source "uniform" draws each value uniformly from the variable's
    domain; "true-marginal-oracle" draws from the exact conditional
    distribution over satisfying extensions (brute-force, cap-guarded).
    """
    rng = random.Random(seed)

    if value_source == "uniform":
        def choose(x, v, probs):
            return rng.randrange(inst.domain_sizes[v])
    elif value_source == "true-marginal-oracle":
        def choose(x, v, probs):
            counts = [
                oracle.brute_count(inst, x.extend(v, a), caps=caps)
                for a in range(inst.domain_sizes[v])
            ]
            total = sum(counts)
            if total == 0:
                raise UnsatError(
                    "no satisfying extension of the current prefix (variable %d)" % v
                )
            pick = rng.randrange(total)
            acc = 0
            for a, cnt in enumerate(counts):
                acc += cnt
                if pick < acc:
                    return a
            raise AssertionError
    else:
        raise ValueError("unknown value_source %r" % value_source)

    result = _run(inst, p_guide, choose)
    result.mode = "randomized-" + value_source
    return result


def potential_simple(inst, x, trees, threshold):
    """Sum over trees of the product of conditional probabilities over threshold."""
    total = Fraction(0)
    for tree in trees:
        prod = Fraction(1)
        for c in tree.members:
            prod *= cond_violation_prob(inst, c, x) / threshold
        total += prod
    return total


def potential_refined(inst, x, v, trees_v, p_freeze, eta):
    """Inner refined-potential sum for one variable.

    Every tree must contain exactly one constraint whose scope includes v;
    that constraint is excluded from its product.
    """
    if eta is None:
        raise RegimeError("eta undefined: 1 - 3*p_freeze*q <= 0")
    coef = 4 * max(1, inst.k) * inst.q * eta
    total = Fraction(0)
    for tree in trees_v:
        holders = [c for c in tree.members if v in inst.scopes[c]]
        if len(holders) != 1:
            raise ValueError("tree lacks a unique member containing variable %d" % v)
        prod = Fraction(1)
        for c in tree.members:
            if c == holders[0]:
                continue
            prod *= coef + 2 * cond_violation_prob(inst, c, x) / p_freeze
        total += prod
    return total


class SimplePotential:
    def __init__(self, inst, params, graph, family_limit=None):
        self.p_guide = params.p_guide
        size = params.simple_tree_size()
        seen = set()
        self.trees = []
        for c in range(inst.m):
            for tree in enumerate_23_trees(graph, c, size, limit=family_limit):
                if tree.members not in seen:
                    seen.add(tree.members)
                    self.trees.append(tuple(sorted(tree.members)))
        self.trees.sort()

    def total(self, probs):
        out = Fraction(0)
        for members in self.trees:
            prod = Fraction(1)
            for c in members:
                prod *= probs[c] / self.p_guide
                if prod == 0:
                    break
            out += prod
        return out


class RefinedPotential:
    """Per-variable tree families and the refined potential over them."""

    def __init__(self, inst, params, graph, family_limit=None):
        if params.eta is None:
            raise RegimeError("eta undefined: 1 - 3*p_freeze*q <= 0")
        self.inst = inst
        self.params = params
        self.coef = 4 * params.k_eff() * inst.q * params.eta
        self.p_freeze = params.p_freeze
        size = params.refined_tree_size()
        cache = {}
        self.items_by_var = {}
        for v in range(inst.n):
            seen = set()
            items = []
            for c in inst.cons_with_var[v]:
                if c not in cache:
                    cache[c] = enumerate_23_trees(graph, c, size, limit=family_limit)
                for tree in cache[c]:
                    if tree.members in seen:
                        continue
                    seen.add(tree.members)
                    # the unique member containing v is excluded from the product
                    others = tuple(sorted(m for m in tree.members if v not in inst.scopes[m]))
                    assert len(others) == len(tree.members) - 1
                    items.append(others)
            items.sort()
            self.items_by_var[v] = items

    def value_for_var(self, probs, v):
        out = Fraction(0)
        for others in self.items_by_var[v]:
            prod = Fraction(1)
            for c in others:
                prod *= self.coef + 2 * probs[c] / self.p_freeze
            out += prod
        return out

    def total(self, probs):
        return sum((self.value_for_var(probs, v) for v in range(self.inst.n)), Fraction(0))

    def event_values(self, probs):
        return {v: self.value_for_var(probs, v) for v in range(self.inst.n)}


def check_event_bound(inst, x, params, refined=None, graph=None):
    """Whether every variable's refined potential at x is within the threshold.

    Returns (ok, per-variable values); the threshold is n^4 * 2^(-floor(L/(k*delta^2)))
    compared in exact arithmetic.
    """
    if refined is None:
        if graph is None:
            graph = build_line_graph(inst)
        refined = RefinedPotential(inst, params, graph)
    probs = {c: cond_violation_prob(inst, c, x) for c in range(inst.m)}
    values = refined.event_values(probs)
    threshold = params.event_threshold(inst.n)
    return all(val <= threshold for val in values.values()), values


def derandomized_guide(inst, params, mode="refined", force=False, graph=None,
                       family_limit=200_000):
    """Deterministic guiding pass choosing each value to minimize the potential.

    Ties break toward the smallest value. Raises RegimeError when the mode's
    parameter inequalities fail (unless force=True) or when a final frozen
    component exceeds the truncation depth.
    """
    report = check_conditions(inst, params)
    held = {e["name"]: e["holds"] for e in report["entries"]}
    if mode == "refined":
        gate = held["freeze_strict"] and held["violation_vs_freeze_strict"]
    elif mode == "simple":
        gate = held["freeze_loose"] and held["guide_vs_freeze_loose"]
    else:
        raise ValueError("unknown mode %r" % mode)
    if not gate and not force:
        raise RegimeError("parameter inequalities for mode %r fail" % mode)

    if graph is None:
        graph = build_line_graph(inst)
    if mode == "refined":
        pot = RefinedPotential(inst, params, graph, family_limit=family_limit)
        potential = pot.total
        h_bound = params.event_threshold(inst.n)
    else:
        pot = SimplePotential(inst, params, graph, family_limit=family_limit)
        potential = pot.total
        h_bound = Fraction(1)
    h0 = potential(_initial_probs(inst))
    if h0 >= h_bound:
        warnings.warn(
            "initial potential %s >= %s; component guarantee is void" % (h0, h_bound)
        )

    def choose(x, v, probs):
        best_a = None
        best_h = None
        for a in range(inst.domain_sizes[v]):
            trial = x.extend(v, a)
            overlay = dict(probs)
            for c in inst.cons_with_var[v]:
                overlay[c] = cond_violation_prob(inst, c, trial)
            h = potential(overlay)
            if best_h is None or h < best_h:
                best_h = h
                best_a = a
        return best_a

    result = _run(inst, params.p_guide, choose, potential=potential)
    result.mode = "derandomized-" + mode
    comps = frozen_components(graph, result.dangerous)
    oversize = [c for c in comps if len(c.constraints) > params.depth]
    if oversize:
        raise RegimeError(
            "frozen component of size %d exceeds depth %d"
            % (max(len(c.constraints) for c in oversize), params.depth)
        )
    return result


def verify_guide_invariants(inst, params, result):
    """Re-derive the guide guarantees directly from a finished run.

    Returns a dict of named checks. The conditional-probability bound
    p_guide*q is only meaningful when p <= p_guide (otherwise constraints
    can be dangerous before any freezing happens); `premise_p_le_p_guide`
    records whether it applies.
    """
    checks = {}
    trace = result.trace
    prev = PartialAssignment.empty()
    chain = True
    for i, x in enumerate(trace):
        if len(x) != i + 1 or not x.extends(prev):
            chain = False
        prev = x
    checks["prefix_chain"] = chain

    everything = set(range(inst.n))
    partition = True
    for i, x in enumerate(trace):
        assigned = set(x.vals)
        if (assigned | result.stage_available[i] | result.stage_frozen[i]) != everything:
            partition = False
        if assigned & result.stage_frozen[i] or assigned & result.stage_available[i]:
            partition = False
        if result.stage_available[i] & result.stage_frozen[i]:
            partition = False
    checks["stage_partition"] = partition
    checks["terminated"] = not trace or not result.stage_available[-1]

    nondec = all(
        result.stage_dangerous[i] <= result.stage_dangerous[i + 1]
        for i in range(len(trace) - 1)
    )
    checks["dangerous_nondecreasing"] = nondec

    frozen_sound = all(
        any(v in inst.scopes[c] for c in result.dangerous)
        for v in result.frozen_vars
    )
    checks["frozen_soundness"] = frozen_sound

    bound = params.p_guide * inst.q
    worst = Fraction(0)
    for x in trace:
        for c in range(inst.m):
            worst = max(worst, cond_violation_prob(inst, c, x))
    checks["premise_p_le_p_guide"] = inst.p <= params.p_guide
    checks["cond_prob_bound"] = worst <= bound
    checks["max_cond_prob"] = worst

    if result.potential_trace is not None:
        checks["potential_nonincreasing"] = all(
            result.potential_trace[i + 1] <= result.potential_trace[i]
            for i in range(len(result.potential_trace) - 1)
        )
    return checks
