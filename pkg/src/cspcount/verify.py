"""Instance-level invariant battery backing the `verify` CLI subcommand.

Each check re-derives a guarantee directly on the given instance; checks
that would exceed the configured caps are skipped with a note.
"""

import random
from fractions import Fraction

from . import oracle
from .depgraph import build_line_graph, frozen_components
from .errors import CspcountError, ResourceError
from .guide import derandomized_guide, greedy_randomized, verify_guide_invariants
from .marginal import LPSystem, build_tree, leaf_counts
from .model import (
    DEFAULT_CAPS,
    PartialAssignment,
    cond_violation_prob,
    default_params,
)
from .pipeline import Sampler, count_approx


def _random_partial(inst, rng):
    x = PartialAssignment.empty()
    for v in range(inst.n):
        if rng.random() < 0.5:
            x = x.extend(v, rng.randrange(inst.domain_sizes[v]))
    return x


def _check_total_probability(inst, rng):
    for _ in range(20):
        if not inst.m:
            return True, "no constraints"
        c = rng.randrange(inst.m)
        x = _random_partial(inst, rng)
        free = [v for v in range(inst.n) if v not in x.vals]
        if not free:
            continue
        v = rng.choice(free)
        qv = inst.domain_sizes[v]
        total = sum(
            Fraction(1, qv) * cond_violation_prob(inst, c, x.extend(v, a))
            for a in range(qv)
        )
        if total != cond_violation_prob(inst, c, x):
            return False, "law of total probability fails at %r" % (x,)
    return True, "exact on sampled prefixes"


def _check_adjacency(inst, graph):
    for i in range(inst.m):
        for j in range(inst.m):
            expect = i != j and bool(inst.scopes[i] & inst.scopes[j])
            if (j in graph.adj[i]) != expect:
                return False, "adjacency mismatch at (%d, %d)" % (i, j)
    return True, "matches pairwise scope scan"


def _check_guide(inst, params):
    problems = []
    for seed in range(3):
        res = greedy_randomized(inst, params.p_guide, seed)
        checks = verify_guide_invariants(inst, params, res)
        for name in ("prefix_chain", "stage_partition", "terminated",
                     "dangerous_nondecreasing", "frozen_soundness"):
            if not checks[name]:
                problems.append("randomized seed %d: %s" % (seed, name))
        if checks["premise_p_le_p_guide"] and not checks["cond_prob_bound"]:
            problems.append("randomized seed %d: cond_prob_bound" % seed)
    for mode in ("refined", "simple"):
        res = derandomized_guide(inst, params, mode=mode, force=True)
        again = derandomized_guide(inst, params, mode=mode, force=True)
        if [x.vals for x in res.trace] != [x.vals for x in again.trace]:
            problems.append("%s: nondeterministic" % mode)
        checks = verify_guide_invariants(inst, params, res)
        for name in ("prefix_chain", "stage_partition", "terminated",
                     "dangerous_nondecreasing", "frozen_soundness",
                     "potential_nonincreasing"):
            if not checks[name]:
                problems.append("%s: %s" % (mode, name))
        if checks["premise_p_le_p_guide"] and not checks["cond_prob_bound"]:
            problems.append("%s: cond_prob_bound" % mode)
    if problems:
        return False, "; ".join(problems)
    return True, "randomized + derandomized runs pass"


def _check_count(inst, params, caps):
    if inst.space_size() > caps.oracle:
        return None, "skipped: space exceeds oracle cap"
    exact = oracle.brute_count(inst, caps=caps)
    if exact == 0:
        return None, "skipped: unsatisfiable instance"
    res = count_approx(inst, params, caps=caps)
    err = abs(res.estimate - exact)
    if err > res.relative_error_bound * exact:
        return False, "estimate %s outside reported bound of %d" % (res.estimate, exact)
    via_oracle = count_approx(inst, params, caps=caps, marginal_source="oracle")
    if via_oracle.estimate != exact:
        return False, "telescoping with oracle marginals is not exact"
    for step in res.per_step_marginals:
        for rq in step.ratios:
            iv = rq.interval
            num = oracle.brute_count(inst, step.prefix.extend(step.var, rq.num_value), caps=caps)
            den = oracle.brute_count(inst, step.prefix.extend(step.var, rq.den_value), caps=caps)
            if den == 0:
                continue
            true_ratio = Fraction(num, den)
            if true_ratio < iv.certified_lo():
                return False, "certified lower bound violated at stage %d" % step.stage
            hi = iv.certified_hi()
            if hi is not None and true_ratio > hi:
                return False, "certified upper bound violated at stage %d" % step.stage
    return True, "estimate within reported bound; certified intervals sound"


def _check_coupling(inst, params, caps):
    if inst.space_size() > caps.oracle:
        return None, "skipped: space exceeds oracle cap"
    target = None
    for v in range(inst.n):
        if inst.cons_with_var[v] and inst.domain_sizes[v] >= 2:
            target = v
            break
    if target is None:
        return None, "skipped: no constrained variable"
    prefix = PartialAssignment.empty()
    if oracle.brute_count(inst, prefix.extend(target, 0), caps=caps) == 0 or \
            oracle.brute_count(inst, prefix.extend(target, 1), caps=caps) == 0:
        return None, "skipped: dead root value"
    tree = build_tree(inst, prefix, target, 0, 1, params.depth, params.p_freeze, caps=caps)
    dist = oracle.brute_coupling(inst, tree, caps=caps)
    sx0, sy0 = dist.sx[0], dist.sy[0]
    counts = {idx: leaf_counts(inst, tree, idx, caps=caps) for idx in tree.good_leaves()}
    lp = LPSystem(tree, counts, inst.q, params.eta)
    ratio = Fraction(sx0, sy0)
    ok, residual = lp.check_point(dist.px, dist.py, ratio, ratio)
    if not ok:
        return False, "exact coupling point infeasible (residual %.2e)" % residual
    return True, "coupling point satisfies the system exactly"


def _check_sampler(inst, params, caps):
    try:
        sampler = Sampler(inst, caps=caps)
    except ResourceError as exc:
        return None, "skipped: %s" % exc
    paths = []
    for seed in range(20):
        res = sampler.sample(seed)
        if not inst.is_satisfying(res.assignment):
            return False, "seed %d produced a violating assignment" % seed
        paths.append(res.path)
    normal = sum(1 for p in paths if p == "normal")
    return True, "20 seeded samples satisfy the instance (%d normal-path)" % normal


def verify_instance(inst, params=None, caps=DEFAULT_CAPS):
    """Run the invariant battery; returns a list of (name, ok, detail).

    ok is True/False, or None for checks skipped under the caps.
    """
    if params is None:
        params = default_params(inst)
    rng = random.Random(12345)
    graph = build_line_graph(inst)
    results = []

    def run(name, fn, *args):
        try:
            out = fn(*args)
        except CspcountError as exc:
            out = (False, "%s: %s" % (type(exc).__name__, exc))
        results.append((name, out[0], out[1]))

    run("total-probability", _check_total_probability, inst, rng)
    run("line-graph-adjacency", _check_adjacency, inst, graph)
    run("frozen-components-partition", _check_components, inst, graph, rng)
    run("guide-invariants", _check_guide, inst, params)
    run("count-vs-oracle", _check_count, inst, params, caps)
    run("coupling-point-feasible", _check_coupling, inst, params, caps)
    run("sampler-satisfies", _check_sampler, inst, params, caps)
    return results


def _check_components(inst, graph, rng):
    for _ in range(5):
        if not inst.m:
            return True, "no constraints"
        f = frozenset(c for c in range(inst.m) if rng.random() < 0.6)
        comps = frozen_components(graph, f)
        seen = [c for comp in comps for c in comp.constraints]
        if sorted(seen) != sorted(f):
            return False, "components do not partition the frozen set"
        for a_i, comp_a in enumerate(comps):
            for comp_b in comps[a_i + 1:]:
                va = set(comp_a.variables)
                vb = set(comp_b.variables)
                for c in range(inst.m):
                    if inst.scopes[c] & va and inst.scopes[c] & vb:
                        return False, "constraint %d touches two components" % c
    return True, "partition and separation hold on random subsets"
