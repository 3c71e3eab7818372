"""Pure-Python counting kernels.

Same signatures as the compiled module `_kernels`; used as the fallback
when the extension is not built (or when CSPCOUNT_PURE is set).
All arrays are int64 and C-contiguous; the dispatcher guarantees that
enumeration spaces fit in int64.
"""


def count_rows(table, pattern):
    # rows of `table` matching `pattern` (-1 entries are wildcards)
    nrows, width = table.shape
    cnt = 0
    for i in range(nrows):
        ok = True
        for j in range(width):
            p = pattern[j]
            if p != -1 and table[i, j] != p:
                ok = False
                break
        if ok:
            cnt += 1
    return cnt


def _violated(assign, c, widths, nrows, pos_flat, pos_off, rows_flat, row_off):
    w = widths[c]
    po = pos_off[c]
    base = row_off[c]
    for r in range(nrows[c]):
        rb = base + r * w
        match = True
        for j in range(w):
            if assign[pos_flat[po + j]] != rows_flat[rb + j]:
                match = False
                break
        if match:
            return True
    return False


def count_sat(domains, widths, nrows, pos_flat, pos_off, rows_flat, row_off):
    """Count assignments over `domains` violating none of the flattened constraints."""
    f = len(domains)
    ncons = len(widths)
    assign = [0] * f
    total = 1
    for d in domains:
        total *= int(d)
    cnt = 0
    for _ in range(total):
        ok = True
        for c in range(ncons):
            if _violated(assign, c, widths, nrows, pos_flat, pos_off, rows_flat, row_off):
                ok = False
                break
        if ok:
            cnt += 1
        # odometer
        for slot in range(f - 1, -1, -1):
            assign[slot] += 1
            if assign[slot] < domains[slot]:
                break
            assign[slot] = 0
    return cnt


def nth_sat(domains, widths, nrows, pos_flat, pos_off, rows_flat, row_off, index, out):
    """Write the index-th satisfying assignment (odometer order) into `out`.

    Returns 1 on success, 0 if fewer than index+1 satisfying assignments exist.
    """
    f = len(domains)
    ncons = len(widths)
    assign = [0] * f
    total = 1
    for d in domains:
        total *= int(d)
    seen = 0
    for _ in range(total):
        ok = True
        for c in range(ncons):
            if _violated(assign, c, widths, nrows, pos_flat, pos_off, rows_flat, row_off):
                ok = False
                break
        if ok:
            if seen == index:
                for j in range(f):
                    out[j] = assign[j]
                return 1
            seen += 1
        for slot in range(f - 1, -1, -1):
            assign[slot] += 1
            if assign[slot] < domains[slot]:
                break
            assign[slot] = 0
    return 0
