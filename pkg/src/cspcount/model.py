"""Core data model: instances, partial assignments, exact conditional probabilities.

All probabilities in this layer are exact `fractions.Fraction` values built
from completion counts; nothing here rounds.
"""

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import UnsatError

# rational upper bound on Euler's number, for conservative condition checks
_E_UPPER = Fraction(2718281828459045235360288, 10**24)


@dataclass(frozen=True)
class Constraint:
    """A constraint given by its scope and the set of violating value tuples."""

    scope: tuple
    violating: tuple

    def __post_init__(self):
        if len(self.scope) == 0:
            raise ValueError("empty constraint scope")
        if len(set(self.scope)) != len(self.scope):
            raise ValueError("duplicate variable in constraint scope")
        if len(set(self.violating)) != len(self.violating):
            raise ValueError("duplicate violating tuple")
        for t in self.violating:
            if len(t) != len(self.scope):
                raise ValueError("violating tuple arity mismatch")


class CSPInstance:
    """Immutable CSP: per-variable domain sizes plus violating-tuple constraints.

    Constraints with no violating tuple are dropped at load time (they never
    affect a count); a constraint violated by every tuple makes the instance
    trivially unsatisfiable and is rejected.
    """

    def __init__(self, domain_sizes, constraints, name="csp"):
        self.name = name
        self.domain_sizes = tuple(int(d) for d in domain_sizes)
        self.n = len(self.domain_sizes)
        for d in self.domain_sizes:
            if d < 2:
                raise ValueError("domain sizes must be >= 2")
        kept = []
        for c in constraints:
            for v in c.scope:
                if not 0 <= v < self.n:
                    raise ValueError("variable index %r out of range" % (v,))
            full = 1
            for v in c.scope:
                full *= self.domain_sizes[v]
            for t in c.violating:
                for v, a in zip(c.scope, t):
                    if not 0 <= a < self.domain_sizes[v]:
                        raise ValueError("violating value %r out of domain" % (a,))
            if len(c.violating) == 0:
                warnings.warn("dropping constraint with no violating tuple")
                continue
            if len(c.violating) == full:
                raise UnsatError("constraint on %s violated by every tuple" % (c.scope,))
            kept.append(c)
        self.constraints = tuple(kept)
        self.m = len(self.constraints)

        self.tables = [
            np.ascontiguousarray(np.array(c.violating, dtype=np.int64).reshape(len(c.violating), len(c.scope)))
            for c in self.constraints
        ]
        self.viol_sets = [frozenset(c.violating) for c in self.constraints]
        self.scopes = [frozenset(c.scope) for c in self.constraints]
        cons_with_var = [[] for _ in range(self.n)]
        for i, c in enumerate(self.constraints):
            for v in c.scope:
                cons_with_var[v].append(i)
        self.cons_with_var = tuple(tuple(lst) for lst in cons_with_var)

        self.q = max(self.domain_sizes) if self.n else 2
        self.k = max((len(c.scope) for c in self.constraints), default=0)
        deg = 0
        for i in range(self.m):
            d = sum(
                1
                for j in range(self.m)
                if j != i and self.scopes[i] & self.scopes[j]
            )
            deg = max(deg, d)
        self.delta = deg
        probs = []
        for i, c in enumerate(self.constraints):
            full = 1
            for v in c.scope:
                full *= self.domain_sizes[v]
            probs.append(Fraction(len(c.violating), full))
        self.cons_prob = tuple(probs)
        self.p = max(probs, default=Fraction(0))

    def space_size(self):
        return kernels.space_size(self.domain_sizes)

    def violated_constraints(self, assignment):
        """Indices of constraints violated by a complete assignment (list of values)."""
        out = []
        for i, c in enumerate(self.constraints):
            if tuple(assignment[v] for v in c.scope) in self.viol_sets[i]:
                out.append(i)
        return out

    def is_satisfying(self, assignment):
        return not self.violated_constraints(assignment)


class PartialAssignment:
    """Immutable map variable -> value, remembering assignment order."""

    __slots__ = ("vals", "order", "_key")

    def __init__(self, vals=None, order=()):
        self.vals = dict(vals) if vals else {}
        self.order = tuple(order)
        self._key = None

    @classmethod
    def empty(cls):
        return cls()

    def value(self, v):
        return self.vals.get(v)

    def __contains__(self, v):
        return v in self.vals

    def __len__(self):
        return len(self.vals)

    def extend(self, v, a):
        """New assignment with v=a appended; rejects reassignment."""
        if v in self.vals:
            raise ValueError("variable %d already assigned" % v)
        vals = dict(self.vals)
        vals[v] = a
        return PartialAssignment(vals, self.order + (v,))

    def extends(self, other):
        """True when self assigns every variable of `other` to the same value."""
        return all(self.vals.get(v) == a for v, a in other.vals.items())

    def key(self):
        # value-level identity, used for memoization
        if self._key is None:
            self._key = frozenset(self.vals.items())
        return self._key

    def __eq__(self, other):
        return (
            isinstance(other, PartialAssignment)
            and self.vals == other.vals
            and self.order == other.order
        )

    def __hash__(self):
        return hash((self.key(), self.order))

    def __repr__(self):
        body = ", ".join("v%d=%d" % (v, self.vals[v]) for v in self.order)
        return "PartialAssignment(%s)" % body


def validate_assignment(inst, x):
    for v, a in x.vals.items():
        if not 0 <= v < inst.n:
            raise ValueError("variable %d out of range" % v)
        if not 0 <= a < inst.domain_sizes[v]:
            raise ValueError("value %d out of domain of variable %d" % (a, v))


def cond_violation_prob(inst, c, x):
    """Exact probability that constraint c is violated given partial assignment x.

    Counts violating completions consistent with x over the product measure on
    the unassigned scope variables. Returns a Fraction in [0, 1].
    """
    num, den = cond_violation_counts(inst, c, x)
    return Fraction(num, den)


def cond_violation_counts(inst, c, x):
    """(numerator, denominator) of cond_violation_prob, as plain integers."""
    con = inst.constraints[c]
    pattern = [x.vals.get(v, -1) for v in con.scope]
    num = kernels.count_rows(inst.tables[c], pattern)
    den = 1
    for v in con.scope:
        if v not in x.vals:
            den *= inst.domain_sizes[v]
    return num, den


def _effective(value):
    return max(1, value)


@dataclass(frozen=True)
class Params:
    """Algorithm parameters and the instance statistics they were derived from."""

    q: int
    k: int
    delta: int
    p: Fraction
    p_guide: Fraction  # freezing threshold used by the guiding pass
    p_freeze: Fraction  # freezing threshold used by coupling trees and sampling
    depth: int  # truncation depth of coupling trees (L)
    eps: Fraction
    eta: object  # Fraction, or None when 1 - 3*p_freeze*q <= 0

    def k_eff(self):
        return _effective(self.k)

    def delta_eff(self):
        return _effective(self.delta)

    def truncation_exponent(self):
        """Integer exponent floor(L / (k * delta^2)) used by error certificates."""
        return self.depth // (self.k_eff() * self.delta_eff() ** 2)

    def refined_tree_size(self):
        return max(1, self.truncation_exponent())

    def simple_tree_size(self):
        return max(1, self.depth // self.delta_eff())

    def certified_err(self, n, mode="refined"):
        e = self.truncation_exponent()
        base = Fraction(4, 2**e)
        if mode == "refined":
            return base * n**4
        return base

    def event_threshold(self, n):
        return Fraction(n**4, 2 ** self.truncation_exponent())


def compute_eta(p_freeze, q, delta):
    """(1 - 3*p_freeze*q)^(-delta) - 1, exactly; None when the base is <= 0."""
    base = 1 - 3 * p_freeze * q
    if base <= 0:
        return None
    return Fraction(1, 1) / base ** _effective(delta) - 1


def default_params(inst, eps=Fraction(1, 5), depth=None, p_guide=None, p_freeze=None,
                   sampling=False):
    """Build Params with the standard threshold (1000 q^2 k delta^4)^(-1).

    `depth` overrides the default truncation depth (with a warning, since all
    error certificates are recomputed from the actual value).
    """
    eps = Fraction(eps)
    q = inst.q
    k = _effective(inst.k)
    d = _effective(inst.delta)
    if p_freeze is None and p_guide is None:
        p_freeze = Fraction(1, 1000 * q**2 * k * d**4)
        p_guide = p_freeze
    elif p_freeze is None:
        p_freeze = Fraction(p_guide)
        p_guide = Fraction(p_guide)
    elif p_guide is None:
        p_guide = Fraction(p_freeze)
        p_freeze = Fraction(p_freeze)
    else:
        p_guide = Fraction(p_guide)
        p_freeze = Fraction(p_freeze)
    if p_guide > p_freeze:
        raise ValueError("p_guide must not exceed p_freeze")
    if depth is None:
        arg = d * inst.n / float(eps) if sampling else d * inst.n
        depth = max(2, math.ceil(80 * k * d**2 * math.log(max(2, arg))))
    else:
        depth = int(depth)
        if depth < 1:
            raise ValueError("depth must be >= 1")
        warnings.warn(
            "user truncation depth %d; error certificates recomputed from it" % depth
        )
    return Params(
        q=q,
        k=inst.k,
        delta=inst.delta,
        p=inst.p,
        p_guide=p_guide,
        p_freeze=p_freeze,
        depth=depth,
        eps=eps,
        eta=compute_eta(p_freeze, q, delta=inst.delta),
    )


@dataclass(frozen=True)
class Caps:
    """Tractability caps; every breach is a typed ResourceError."""

    oracle: int = 2**24
    tree_nodes: int = 10**6
    enumeration: int = 2**24
    resample: int = 10**6


DEFAULT_CAPS = Caps()


def check_conditions(inst, params):
    """Evaluate the named parameter inequalities with exact rationals.

    Violations never stop the algorithms; they only downgrade guarantees.
    Degenerate instances (k or delta equal to 0) are evaluated with the
    value replaced by 1.
    """
    q = Fraction(inst.q)
    k = Fraction(_effective(inst.k))
    d = Fraction(_effective(inst.delta))
    p = inst.p
    pg = params.p_guide
    pf = params.p_freeze
    entries = []

    def add(name, holds, detail):
        entries.append({"name": name, "holds": bool(holds), "detail": detail})

    add(
        "lll_symmetric",
        _E_UPPER * p * (d + 1) <= 1,
        "e * p * (delta+1) <= 1 (rational upper bound on e)",
    )
    add(
        "freeze_loose",
        pf <= 1 / (100 * q**2 * k * d**4),
        "p_freeze <= (100 q^2 k delta^4)^-1",
    )
    add(
        "guide_vs_freeze_loose",
        pg <= pf / (100 * d**3 * q),
        "p_guide <= p_freeze / (100 delta^3 q)",
    )
    add(
        "freeze_strict",
        pg == pf and pf <= 1 / (1000 * q**2 * k * d**4),
        "p_guide = p_freeze <= (1000 q^2 k delta^4)^-1",
    )
    add(
        "violation_vs_freeze_strict",
        p <= pf / (1000 * d**3),
        "p <= p_freeze / (1000 delta^3)",
    )
    add(
        "guide_legacy",
        pg <= 1 / (10000 * q**3 * k * d**7),
        "p_guide <= (10000 q^3 k delta^7)^-1",
    )
    add(
        "truncation_depth",
        params.depth >= 8 * k * d**2,
        "depth >= 8 k delta^2",
    )
    return {
        "entries": entries,
        "all_hold": all(e["holds"] for e in entries),
    }
