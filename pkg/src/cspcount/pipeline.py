"""End-to-end approximate counting and sampling.

Counting telescopes the satisfying-assignment count into a product of
per-stage marginals along the derandomized guide's trace, times an exact
residual count over the small frozen components. Sampling walks variables
in input order, drawing each unfrozen one from its certified marginal
estimate, then completes the frozen components by exact uniform enumeration.
"""

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from . import kernels, oracle
from .depgraph import build_line_graph, frozen_components
from .errors import InternalError, ResourceError, UnsatError
from .guide import RefinedPotential, derandomized_guide
from .marginal import MarginalEstimator
from .model import (
    DEFAULT_CAPS,
    PartialAssignment,
    check_conditions,
    cond_violation_prob,
    default_params,
)


def count_residual_exact(inst, guide_result, graph=None, caps=DEFAULT_CAPS):
    """Exact number of satisfying completions of the guide's final assignment.

    The frozen constraints split into components whose variable sets are
    mutually untouched by any constraint, so the count is a product of
    per-component enumerations; constraints meeting no component are fully
    assigned and merely checked.
    """
    if graph is None:
        graph = build_line_graph(inst)
    final = guide_result.final()
    unassigned = set(range(inst.n)) - final.vals.keys()
    comps = frozen_components(graph, guide_result.dangerous)
    covered_vars = set()
    covered_cons = set()
    total = 1
    for comp in comps:
        comp_vars = set(comp.variables)
        covered_vars |= comp_vars
        free = sorted(comp_vars & unassigned)
        slots = {v: i for i, v in enumerate(free)}
        domains = [inst.domain_sizes[v] for v in free]
        touching = [c for c in range(inst.m) if inst.scopes[c] & comp_vars]
        covered_cons.update(touching)
        fixed = {}
        for c in touching:
            for v in inst.constraints[c].scope:
                if v not in slots:
                    if v not in final.vals:
                        raise InternalError(
                            "constraint %d leaks outside component %s" % (c, comp.constraints)
                        )
                    fixed[v] = final.vals[v]
        projected = kernels.project_constraints(
            fixed, slots, [(inst.constraints[c].scope, inst.tables[c]) for c in touching]
        )
        count = kernels.count_extensions(
            domains, projected, cap=caps.enumeration, what="component"
        )
        if count == 0:
            return 0
        total *= count
    if not unassigned <= covered_vars:
        raise InternalError("frozen variable outside every component")
    for c in range(inst.m):
        if c in covered_cons:
            continue
        if cond_violation_prob(inst, c, final) == 1:
            return 0
    return total


@dataclass
class RatioQuery:
    num_value: int
    den_value: int
    interval: object  # RatioInterval


@dataclass
class StepRecord:
    stage: int
    var: int
    value: int
    kind: str  # "estimated" or "uniform-free"
    prefix: PartialAssignment
    estimate: Fraction
    lo: Fraction
    hi: Fraction
    certified_lo: Fraction
    certified_hi: Fraction
    anchor: int = None
    ratios: list = field(default_factory=list)


@dataclass
class CountResult:
    estimate: Fraction
    relative_error_bound: Fraction
    certified_error_bound: object  # Fraction, or None when vacuous
    residual_count: int
    per_step_marginals: list
    regime_report: dict
    guide: object
    params: object
    mode: str
    marginal_source: str


def count_approx(inst, params=None, caps=DEFAULT_CAPS, mode="refined",
                 marginal_source="lp", eps=Fraction(1, 5), depth=None):
    """Deterministic approximate count of satisfying assignments.

    The reported relative_error_bound is the achieved product of per-stage
    bracket widths; certified_error_bound additionally applies the mode's
    theoretical widening (often vacuous at small truncation depths).
    Variables outside every constraint contribute exact uniform factors.
    With marginal_source="oracle" the telescoping uses exact brute-force
    marginals and the result equals the exact count.
    """
    if params is None:
        params = default_params(inst, eps=eps, depth=depth)
    graph = build_line_graph(inst)
    report = check_conditions(inst, params)
    guide_result = derandomized_guide(inst, params, mode=mode, force=True, graph=graph)
    residual = count_residual_exact(inst, guide_result, graph=graph, caps=caps)
    if residual == 0:
        raise InternalError(
            "guide produced an unsatisfiable residual; parameters far out of regime"
        )
    estimator = MarginalEstimator(inst, params, caps=caps, mode=mode)
    trace = guide_result.trace
    steps = []
    for i in range(len(trace), 0, -1):
        cur = trace[i - 1]
        prefix = trace[i - 2] if i >= 2 else PartialAssignment.empty()
        var = cur.order[-1]
        value = cur.vals[var]
        if not inst.cons_with_var[var]:
            u = Fraction(1, inst.domain_sizes[var])
            steps.append(StepRecord(i, var, value, "uniform-free", prefix,
                                    u, u, u, u, u))
            continue
        if marginal_source == "oracle":
            dist = oracle.brute_marginal(inst, prefix, var, caps=caps)
            u = dist[value]
            if u == 0:
                raise InternalError("oracle marginal 0 for a value the guide took")
            steps.append(StepRecord(i, var, value, "estimated", prefix,
                                    u, u, u, u, u))
            continue
        est = estimator.estimate(prefix, var)
        if est.est[value] == 0:
            raise InternalError(
                "estimated marginal 0 for value %d of variable %d taken by the guide"
                % (value, var)
            )
        steps.append(StepRecord(
            i, var, value, "estimated", prefix,
            est.est[value], est.lo[value], est.hi[value],
            est.certified_lo[value], est.certified_hi[value],
            anchor=est.anchor,
            ratios=[RatioQuery(b, est.anchor, iv) for b, iv in sorted(est.ratios.items())],
        ))
    steps.sort(key=lambda s: s.stage)

    product = Fraction(1)
    for s in steps:
        product *= s.estimate
    estimate = Fraction(residual) / product

    up = Fraction(1)
    down = Fraction(1)
    cert_up = Fraction(1)
    cert_vacuous = False
    for s in steps:
        up *= s.hi / s.estimate
        down *= s.estimate / s.lo
        if s.certified_lo <= 0:
            cert_vacuous = True
        else:
            cert_up *= s.estimate / s.certified_lo
    bound = max(up, down) - 1
    if cert_vacuous:
        certified = None
    else:
        cert_down = Fraction(1)
        for s in steps:
            cert_down *= s.certified_hi / s.estimate
        certified = max(cert_up, cert_down) - 1

    return CountResult(
        estimate=estimate,
        relative_error_bound=bound,
        certified_error_bound=certified,
        residual_count=residual,
        per_step_marginals=steps,
        regime_report=report,
        guide=guide_result,
        params=params,
        mode=mode,
        marginal_source=marginal_source,
    )


def moser_tardos(inst, seed, resample_cap=DEFAULT_CAPS.resample):
    """Resampling search for a satisfying assignment.

    Starts from a product-measure draw; while some constraint is violated,
    resamples the lowest-indexed violated constraint's scope uniformly.
    """
    rng = random.Random(seed)
    assignment = [rng.randrange(d) for d in inst.domain_sizes]
    resamples = 0
    while True:
        violated = None
        for c in range(inst.m):
            if tuple(assignment[v] for v in inst.constraints[c].scope) in inst.viol_sets[c]:
                violated = c
                break
        if violated is None:
            return assignment
        resamples += 1
        if resamples > resample_cap:
            raise ResourceError(
                "resample cap %d exceeded; instance may be unsatisfiable or far out of regime"
                % resample_cap
            )
        for v in inst.constraints[violated].scope:
            assignment[v] = rng.randrange(inst.domain_sizes[v])


@dataclass
class SampleResult:
    assignment: list
    path: str  # "normal" | "early-termination-event" | "early-termination-component"
    meta: dict


class Sampler:
    """Reusable sampling context: shared caches across seeded draws."""

    def __init__(self, inst, params=None, caps=DEFAULT_CAPS, eps=Fraction(1, 5),
                 depth=None):
        self.inst = inst
        if params is None:
            params = default_params(inst, eps=eps, depth=depth, sampling=True)
        self.params = params
        self.caps = caps
        self.graph = build_line_graph(inst)
        self.estimator = MarginalEstimator(inst, params, caps=caps, mode="refined")
        self.refined = (
            RefinedPotential(inst, params, self.graph) if inst.m and params.eta is not None
            else None
        )
        d = max(1, inst.delta)
        self.component_bound = max(1, math.ceil(80 * d * math.log(max(2, d * inst.n))))
        self._event_cache = {}
        self._enum_cache = {}
        self._verify_satisfiable()

    def _verify_satisfiable(self):
        try:
            self.witness = moser_tardos(self.inst, seed=0, resample_cap=self.caps.resample)
            return
        except ResourceError:
            pass
        if self.inst.space_size() > self.caps.oracle:
            raise ResourceError(
                "cannot verify satisfiability: resampling failed and the oracle space "
                "exceeds its cap"
            )
        if oracle.brute_count(self.inst, caps=self.caps) == 0:
            raise UnsatError("instance has no satisfying assignment")
        self.witness = oracle.brute_sample(self.inst, seed=0, caps=self.caps)

    def _event_ok(self, x):
        if self.refined is None:
            return self.inst.m == 0 or self.params.eta is not None
        key = x.key()
        if key not in self._event_cache:
            probs = {c: cond_violation_prob(self.inst, c, x) for c in range(self.inst.m)}
            values = self.refined.event_values(probs)
            threshold = self.params.event_threshold(self.inst.n)
            self._event_cache[key] = all(v <= threshold for v in values.values())
        return self._event_cache[key]

    def _fallback(self, rng, path, meta):
        assignment = moser_tardos(self.inst, seed=rng.randrange(2**32),
                                  resample_cap=self.caps.resample)
        if not self.inst.is_satisfying(assignment):
            raise InternalError("fallback assignment violates a constraint")
        return SampleResult(assignment, path, meta)

    def _component_completions(self, comp, x):
        comp_vars = set(comp.variables)
        free = sorted(v for v in comp_vars if v not in x.vals)
        slots = {v: i for i, v in enumerate(free)}
        touching = [c for c in range(self.inst.m) if self.inst.scopes[c] & comp_vars]
        fixed = {}
        for c in touching:
            for v in self.inst.constraints[c].scope:
                if v not in slots:
                    fixed[v] = x.vals[v]
        key = (comp.constraints, tuple(sorted(fixed.items())))
        if key in self._enum_cache:
            return free, self._enum_cache[key]
        domains = [self.inst.domain_sizes[v] for v in free]
        projected = kernels.project_constraints(
            fixed, slots,
            [(self.inst.constraints[c].scope, self.inst.tables[c]) for c in touching],
        )
        count = kernels.count_extensions(
            domains, projected, cap=self.caps.enumeration, what="component"
        )
        if count and count <= 4096:
            completions = [
                kernels.nth_extension(domains, projected, i, cap=self.caps.enumeration,
                                      what="component")
                for i in range(count)
            ]
            entry = ("list", completions)
        else:
            entry = ("count", count, domains, projected)
        self._enum_cache[key] = entry
        return free, entry

    def sample(self, seed):
        """One seeded draw; every returned assignment is checked to satisfy the instance."""
        inst = self.inst
        rng = random.Random(seed)
        meta = {"seed": seed, "component_bound": self.component_bound}
        avail = set(range(inst.n))
        frozen = set()
        dangerous = set()
        x = PartialAssignment.empty()
        for i in range(inst.n):
            if not self._event_ok(x):
                meta["failed_at"] = i
                return self._fallback(rng, "early-termination-event", meta)
            v = i
            if v not in avail:
                continue
            if not inst.cons_with_var[v]:
                weights = [Fraction(1, inst.domain_sizes[v])] * inst.domain_sizes[v]
            else:
                est = self.estimator.estimate(x, v)
                weights = [est.est[a] for a in range(inst.domain_sizes[v])]
            r = rng.random()
            acc = 0.0
            value = inst.domain_sizes[v] - 1
            for a, w in enumerate(weights):
                acc += float(w)
                if r < acc:
                    value = a
                    break
            x = x.extend(v, value)
            danger_now = set()
            for c in range(inst.m):
                if cond_violation_prob(inst, c, x) > self.params.p_freeze:
                    danger_now.add(c)
            dangerous |= danger_now
            for c in danger_now:
                frozen |= inst.scopes[c] - x.vals.keys()
            avail -= frozen
            avail.discard(v)
        comps = frozen_components(self.graph, dangerous)
        if any(len(c.constraints) > self.component_bound for c in comps):
            meta["component_sizes"] = [len(c.constraints) for c in comps]
            return self._fallback(rng, "early-termination-component", meta)
        out = [0] * inst.n
        for v, a in x.vals.items():
            out[v] = a
        for comp in comps:
            free, entry = self._component_completions(comp, x)
            if entry[0] == "list":
                completions = entry[1]
                if not completions:
                    raise InternalError("frozen component has no satisfying completion")
                values = completions[rng.randrange(len(completions))]
            else:
                _, count, domains, projected = entry
                if count == 0:
                    raise InternalError("frozen component has no satisfying completion")
                values = kernels.nth_extension(
                    domains, projected, rng.randrange(count),
                    cap=self.caps.enumeration, what="component",
                )
            for v, a in zip(free, values):
                out[v] = a
        if not inst.is_satisfying(out):
            raise InternalError("sampler produced a violating assignment")
        return SampleResult(out, "normal", meta)


def sample_approx(inst, params=None, seed=0, caps=DEFAULT_CAPS, eps=Fraction(1, 5),
                  depth=None, sampler=None):
    """One near-uniform satisfying assignment; see Sampler for batched use."""
    if sampler is None:
        sampler = Sampler(inst, params=params, caps=caps, eps=eps, depth=depth)
    return sampler.sample(seed)
