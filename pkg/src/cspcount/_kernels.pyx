# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled counting kernels: wildcard row matching and satisfying-completion scans."""


def count_rows(long long[:, ::1] table, long long[::1] pattern):
    cdef Py_ssize_t nrows = table.shape[0]
    cdef Py_ssize_t width = table.shape[1]
    cdef Py_ssize_t i, j
    cdef long long p
    cdef long long cnt = 0
    cdef bint ok
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


cdef inline bint _violated(long long *assign, Py_ssize_t c,
                           long long[::1] widths, long long[::1] nrows,
                           long long[::1] pos_flat, long long[::1] pos_off,
                           long long[::1] rows_flat, long long[::1] row_off) noexcept:
    cdef Py_ssize_t w = <Py_ssize_t> widths[c]
    cdef Py_ssize_t po = <Py_ssize_t> pos_off[c]
    cdef Py_ssize_t base = <Py_ssize_t> row_off[c]
    cdef Py_ssize_t r, j, rb
    cdef bint match
    for r in range(<Py_ssize_t> nrows[c]):
        rb = base + r * w
        match = True
        for j in range(w):
            if assign[pos_flat[po + j]] != rows_flat[rb + j]:
                match = False
                break
        if match:
            return True
    return False


def count_sat(long long[::1] domains,
              long long[::1] widths, long long[::1] nrows,
              long long[::1] pos_flat, long long[::1] pos_off,
              long long[::1] rows_flat, long long[::1] row_off):
    """Count assignments over `domains` violating none of the flattened constraints."""
    cdef Py_ssize_t f = domains.shape[0]
    cdef Py_ssize_t ncons = widths.shape[0]
    # dispatcher guarantees f <= 62 (total space bounded by the enumeration cap)
    cdef long long assign[64]
    cdef Py_ssize_t slot, c
    cdef long long total = 1
    cdef long long it, cnt = 0
    cdef bint ok
    for slot in range(f):
        assign[slot] = 0
        total *= domains[slot]
    for it in range(total):
        ok = True
        for c in range(ncons):
            if _violated(assign, c, widths, nrows, pos_flat, pos_off, rows_flat, row_off):
                ok = False
                break
        if ok:
            cnt += 1
        slot = f - 1
        while slot >= 0:
            assign[slot] += 1
            if assign[slot] < domains[slot]:
                break
            assign[slot] = 0
            slot -= 1
    return cnt


def nth_sat(long long[::1] domains,
            long long[::1] widths, long long[::1] nrows,
            long long[::1] pos_flat, long long[::1] pos_off,
            long long[::1] rows_flat, long long[::1] row_off,
            long long index, long long[::1] out):
    """Write the index-th satisfying assignment (odometer order) into `out`.

    Returns 1 on success, 0 if fewer than index+1 satisfying assignments exist.
    """
    cdef Py_ssize_t f = domains.shape[0]
    cdef Py_ssize_t ncons = widths.shape[0]
    cdef long long assign[64]
    cdef Py_ssize_t slot, c, j
    cdef long long total = 1
    cdef long long it, seen = 0
    cdef bint ok
    for slot in range(f):
        assign[slot] = 0
        total *= domains[slot]
    for it in range(total):
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
        slot = f - 1
        while slot >= 0:
            assign[slot] += 1
            if assign[slot] < domains[slot]:
                break
            assign[slot] = 0
            slot -= 1
    return 0
