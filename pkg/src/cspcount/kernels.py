"""Kernel dispatch and enumeration helpers.

The hot loops (wildcard row matching, satisfying-completion scans) live in
the compiled extension `_kernels` when it is built; otherwise the pure-Python
twin `_kernels_py` is used. Set CSPCOUNT_PURE=1 to force the fallback.
"""

import os

import numpy as np

from .errors import ResourceError

if os.environ.get("CSPCOUNT_PURE"):
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"

# largest enumeration the int64 kernels accept; real limits come from caps
_KERNEL_SPACE_LIMIT = 1 << 62

_EMPTY_I64 = np.empty(0, dtype=np.int64)


def count_rows(table, pattern):
    """Number of rows of `table` matching `pattern` (-1 entries match anything)."""
    if table.shape[0] == 0:
        return 0
    pat = np.asarray(pattern, dtype=np.int64)
    return int(_impl.count_rows(table, pat))


def project_constraints(fixed, free_slots, cons_items):
    """Restrict constraints to the free variables given a fixed partial assignment.

    fixed: mapping var -> value for assigned variables.
    free_slots: mapping var -> slot index in the enumeration vector.
    cons_items: iterable of (scope, table) with table an int64 array.

    Returns a list of (positions, rows) with rows restricted to consistent
    tuples and columns reduced to free scope positions, or None if some
    constraint is already violated by `fixed`. Scope variables must all be
    either fixed or free.
    """
    projected = []
    for scope, table in cons_items:
        pattern = np.empty(len(scope), dtype=np.int64)
        free_pos = []
        for j, v in enumerate(scope):
            if v in fixed:
                pattern[j] = fixed[v]
            else:
                pattern[j] = -1
                free_pos.append(j)
        mask = np.ones(table.shape[0], dtype=bool)
        for j in range(len(scope)):
            if pattern[j] != -1:
                mask &= table[:, j] == pattern[j]
        rows = table[mask]
        if rows.shape[0] == 0:
            continue  # cannot be violated any more
        if not free_pos:
            return None  # violated outright
        positions = np.array([free_slots[scope[j]] for j in free_pos], dtype=np.int64)
        projected.append((positions, np.ascontiguousarray(rows[:, free_pos])))
    return projected


def _flatten(projected):
    widths = np.array([p.shape[0] for p, _ in projected], dtype=np.int64)
    nrows = np.array([r.shape[0] for _, r in projected], dtype=np.int64)
    pos_off = np.zeros(len(projected), dtype=np.int64)
    row_off = np.zeros(len(projected), dtype=np.int64)
    if len(projected):
        pos_off[1:] = np.cumsum(widths)[:-1]
        row_off[1:] = np.cumsum(widths * nrows)[:-1]
    pos_flat = (
        np.concatenate([p for p, _ in projected]) if projected else _EMPTY_I64
    )
    rows_flat = (
        np.concatenate([r.ravel() for _, r in projected]) if projected else _EMPTY_I64
    )
    return widths, nrows, pos_flat, pos_off, rows_flat, row_off


def space_size(domains):
    total = 1
    for d in domains:
        total *= int(d)
    return total


def _check_space(domains, cap, what):
    total = space_size(domains)
    if cap is not None and total > cap:
        raise ResourceError(
            "%s enumeration space %d exceeds cap %d" % (what, total, cap)
        )
    if total > _KERNEL_SPACE_LIMIT or len(domains) > 62:
        raise ResourceError("%s enumeration space too large for the kernels" % what)
    return total


def count_extensions(domains, projected, cap=None, what="completion"):
    """Count assignments over `domains` satisfying all projected constraints.

    `projected` is the output of project_constraints (None means a constraint
    is violated by the fixed part, giving count 0).
    """
    if projected is None:
        return 0
    if not projected:
        return space_size(domains)  # exact big integer, no scan needed
    _check_space(domains, cap, what)
    dom = np.asarray(domains, dtype=np.int64)
    return int(_impl.count_sat(dom, *_flatten(projected)))


def nth_extension(domains, projected, index, cap=None, what="completion"):
    """The index-th satisfying assignment in odometer order, as a list."""
    if projected is None:
        raise IndexError("no satisfying extensions")
    f = len(domains)
    if not projected:
        total = space_size(domains)
        if not 0 <= index < total:
            raise IndexError("index out of range")
        out = [0] * f
        for slot in range(f - 1, -1, -1):
            index, out[slot] = divmod(index, int(domains[slot]))
        return out
    _check_space(domains, cap, what)
    dom = np.asarray(domains, dtype=np.int64)
    out = np.zeros(f, dtype=np.int64)
    found = _impl.nth_sat(dom, *_flatten(projected), int(index), out)
    if not found:
        raise IndexError("index out of range")
    return [int(v) for v in out]
