"""Brute-force ground truth: exact counts, marginals, sampling, coupling probabilities.

Everything here is cap-guarded exhaustive enumeration; nothing is shared with
the approximate pipeline beyond the instance representation, so these results
can serve as independent oracles in tests.
"""

import random
from dataclasses import dataclass, field
from fractions import Fraction

from . import kernels
from .errors import ResourceError, UnsatError
from .model import DEFAULT_CAPS


def _free_setup(inst, x):
    free = [v for v in range(inst.n) if v not in x.vals]
    slots = {v: i for i, v in enumerate(free)}
    domains = [inst.domain_sizes[v] for v in free]
    return free, slots, domains


def brute_count(inst, x=None, caps=DEFAULT_CAPS):
    """Exact number of complete satisfying extensions of x."""
    from .model import PartialAssignment

    x = x if x is not None else PartialAssignment.empty()
    free, slots, domains = _free_setup(inst, x)
    total = kernels.space_size(domains)
    if total > caps.oracle:
        raise ResourceError(
            "oracle space %d exceeds cap %d" % (total, caps.oracle)
        )
    projected = kernels.project_constraints(
        x.vals, slots, [(inst.constraints[c].scope, inst.tables[c]) for c in range(inst.m)]
    )
    return kernels.count_extensions(domains, projected, cap=caps.oracle, what="oracle")


def brute_marginal(inst, x, v, caps=DEFAULT_CAPS):
    """Exact conditional distribution of v over satisfying extensions of x."""
    if v in x.vals:
        raise ValueError("variable %d already assigned" % v)
    counts = [
        brute_count(inst, x.extend(v, a), caps=caps)
        for a in range(inst.domain_sizes[v])
    ]
    total = sum(counts)
    if total == 0:
        raise UnsatError("conditioning on an empty satisfying set")
    return [Fraction(c, total) for c in counts]


def brute_sample(inst, seed, caps=DEFAULT_CAPS):
    """Exactly uniform satisfying assignment (indexes into the enumeration)."""
    from .model import PartialAssignment

    x = PartialAssignment.empty()
    free, slots, domains = _free_setup(inst, x)
    total = kernels.space_size(domains)
    if total > caps.oracle:
        raise ResourceError("oracle space %d exceeds cap %d" % (total, caps.oracle))
    projected = kernels.project_constraints(
        x.vals, slots, [(inst.constraints[c].scope, inst.tables[c]) for c in range(inst.m)]
    )
    count = kernels.count_extensions(domains, projected, cap=caps.oracle, what="oracle")
    if count == 0:
        raise UnsatError("instance has no satisfying assignment")
    rng = random.Random(seed)
    idx = rng.randrange(count)
    values = kernels.nth_extension(domains, projected, idx, cap=caps.oracle, what="oracle")
    out = [0] * inst.n
    for v, a in zip(free, values):
        out[v] = a
    return out


def maximal_coupling(mu, nu):
    """Maximal coupling of two distributions on range(q), as a q x q matrix.

    Diagonal mass min(mu, nu); off-diagonal excess transported greedily in
    value order (deterministic).
    """
    q = len(mu)
    pi = [[Fraction(0)] * q for _ in range(q)]
    for a in range(q):
        pi[a][a] = min(mu[a], nu[a])
    exc_mu = [mu[a] - pi[a][a] for a in range(q)]
    exc_nu = [nu[a] - pi[a][a] for a in range(q)]
    j = 0
    for a in range(q):
        while exc_mu[a] > 0:
            while exc_nu[j] == 0:
                j += 1
            move = min(exc_mu[a], exc_nu[j])
            pi[a][j] += move
            exc_mu[a] -= move
            exc_nu[j] -= move
    return pi


@dataclass
class CouplingDistribution:
    """Exact reach probabilities of the idealized coupling on a truncated tree."""

    mu_cp: dict = field(default_factory=dict)  # node index -> Fraction
    px: dict = field(default_factory=dict)
    py: dict = field(default_factory=dict)
    sx: dict = field(default_factory=dict)  # node index -> |S_x|
    sy: dict = field(default_factory=dict)


def brute_coupling(inst, tree, caps=DEFAULT_CAPS):
    """Exact coupling distribution over a truncated coupling tree.

    At every non-leaf node the two exact conditional marginals at the next
    variable are maximally coupled and the node's mass is pushed to the
    children. Reach probabilities are normalized by the exact conditional
    masses of each side; 0/0 is taken as 0 (dead branches).
    """
    dist = CouplingDistribution()
    root = tree.nodes[0]
    sx0 = brute_count(inst, tree.x_assignment(0), caps=caps)
    sy0 = brute_count(inst, tree.y_assignment(0), caps=caps)
    dist.mu_cp[0] = Fraction(1)
    for idx in tree.bfs_order():
        node = tree.nodes[idx]
        xa = tree.x_assignment(idx)
        ya = tree.y_assignment(idx)
        dist.sx[idx] = brute_count(inst, xa, caps=caps)
        dist.sy[idx] = brute_count(inst, ya, caps=caps)
        w = dist.mu_cp[idx]
        mass_x = Fraction(dist.sx[idx], sx0) if sx0 else Fraction(0)
        mass_y = Fraction(dist.sy[idx], sy0) if sy0 else Fraction(0)
        dist.px[idx] = w / mass_x if mass_x else Fraction(0)
        dist.py[idx] = w / mass_y if mass_y else Fraction(0)
        if node.is_leaf:
            continue
        v = node.next_var
        if w == 0:
            for child in node.children.values():
                dist.mu_cp[child] = Fraction(0)
            continue
        mu = brute_marginal(inst, xa, v, caps=caps)
        nu = brute_marginal(inst, ya, v, caps=caps)
        pi = maximal_coupling(mu, nu)
        for (a, b), child in node.children.items():
            dist.mu_cp[child] = w * pi[a][b]
    return dist
