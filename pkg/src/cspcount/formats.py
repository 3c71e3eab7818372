"""Instance parsers and serializers.

Three line-oriented formats, all with '#'/'c' comment handling and 1-based
variable numbering in files (0-based internally):

dimacs-cnf      standard DIMACS; each clause becomes one constraint whose
                single violating tuple falsifies every literal.
hypergraph-coloring
                header "p hcol <n> <m> <q>"; lines "e v1 ... vk"; each edge
                becomes a constraint whose violating tuples are the q
                monochromatic assignments.
generic-csp     header "csp <n> <m>"; optional "dom <var> <size>" lines
                (default size 2); each constraint is "con <k> <v1> ... <vk>"
                followed by one line per violating tuple (0-based values)
                and a closing "end".
"""

import warnings

from .errors import ParseError
from .model import Constraint, CSPInstance

_MAX_HEADER = 10**6  # parser totality: reject absurd declared sizes


def _tokens(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        yield lineno, line.split()


def _int(tok, lineno, what="integer"):
    try:
        return int(tok)
    except ValueError:
        raise ParseError("expected %s, got %r" % (what, tok), line=lineno)


def parse(text, kind="auto"):
    """Parse instance text; raises ParseError with a line number on bad input."""
    if kind == "auto":
        kind = detect_format(text)
    if kind in ("dimacs", "dimacs-cnf", "cnf"):
        return _parse_dimacs(text)
    if kind in ("hcol", "hypergraph-coloring"):
        return _parse_hcol(text)
    if kind in ("csp", "generic-csp"):
        return _parse_generic(text)
    raise ParseError("unknown format %r" % kind)


def detect_format(text):
    for lineno, toks in _tokens(text):
        if toks[0] == "c":
            continue
        if toks[0] == "p" and len(toks) >= 2 and toks[1] == "cnf":
            return "dimacs"
        if toks[0] == "p" and len(toks) >= 2 and toks[1] == "hcol":
            return "hcol"
        if toks[0] == "csp":
            return "csp"
        raise ParseError("cannot detect format from %r" % " ".join(toks), line=lineno)
    raise ParseError("empty input", line=1)


def _check_header_size(value, what, lineno):
    if value < 0 or value > _MAX_HEADER:
        raise ParseError("%s %d out of supported range" % (what, value), line=lineno)


def _parse_dimacs(text):
    n = None
    clauses = []
    literals = []
    last_line = 1
    for lineno, toks in _tokens(text):
        last_line = lineno
        if toks[0] == "c":
            continue
        if toks[0] == "p":
            if n is not None:
                raise ParseError("duplicate problem line", line=lineno)
            if len(toks) != 4 or toks[1] != "cnf":
                raise ParseError("malformed problem line", line=lineno)
            n = _int(toks[2], lineno, "variable count")
            m = _int(toks[3], lineno, "clause count")
            _check_header_size(n, "variable count", lineno)
            _check_header_size(m, "clause count", lineno)
            continue
        if n is None:
            raise ParseError("clause before problem line", line=lineno)
        for tok in toks:
            lit = _int(tok, lineno, "literal")
            if lit == 0:
                clauses.append((literals, lineno))
                literals = []
            else:
                var = abs(lit) - 1
                if var >= n:
                    raise ParseError("variable %d out of range" % abs(lit), line=lineno)
                literals.append(lit)
    if n is None:
        raise ParseError("missing problem line", line=last_line)
    if literals:
        raise ParseError("clause not terminated by 0", line=last_line)
    constraints = []
    for lits, lineno in clauses:
        by_var = {}
        contradictory = False
        for lit in lits:
            var = abs(lit) - 1
            want = 0 if lit > 0 else 1  # violating value falsifies the literal
            if var in by_var and by_var[var] != want:
                contradictory = True
            by_var[var] = want
        if contradictory or not by_var:
            warnings.warn("dropping tautological or empty clause at line %d" % lineno)
            continue
        scope = tuple(sorted(by_var))
        constraints.append(Constraint(scope, (tuple(by_var[v] for v in scope),)))
    return CSPInstance([2] * n, constraints, name="dimacs")


def _parse_hcol(text):
    n = None
    q = None
    edges = []
    for lineno, toks in _tokens(text):
        if toks[0] == "c":
            continue
        if toks[0] == "p":
            if n is not None:
                raise ParseError("duplicate problem line", line=lineno)
            if len(toks) != 5 or toks[1] != "hcol":
                raise ParseError("malformed problem line", line=lineno)
            n = _int(toks[2], lineno, "vertex count")
            m = _int(toks[3], lineno, "edge count")
            q = _int(toks[4], lineno, "palette size")
            _check_header_size(n, "vertex count", lineno)
            _check_header_size(m, "edge count", lineno)
            if q < 2:
                raise ParseError("palette size must be >= 2", line=lineno)
            continue
        if toks[0] == "e":
            if n is None:
                raise ParseError("edge before problem line", line=lineno)
            verts = [_int(t, lineno, "vertex") for t in toks[1:]]
            if not verts:
                raise ParseError("empty edge", line=lineno)
            for v in verts:
                if not 1 <= v <= n:
                    raise ParseError("vertex %d out of range" % v, line=lineno)
            if len(set(verts)) != len(verts):
                raise ParseError("repeated vertex in edge", line=lineno)
            edges.append((tuple(v - 1 for v in verts), lineno))
            continue
        raise ParseError("unrecognized line %r" % " ".join(toks), line=lineno)
    if n is None:
        raise ParseError("missing problem line", line=1)
    constraints = []
    for scope, lineno in edges:
        violating = tuple((color,) * len(scope) for color in range(q))
        constraints.append(Constraint(tuple(sorted(scope)), violating))
    return CSPInstance([q] * n, constraints, name="hcol")


def _parse_generic(text):
    it = _tokens(text)
    n = None
    m = None
    domains = None
    constraints = []
    expect = "header"
    scope = None
    want = 0
    rows = []
    row_lines = []
    for lineno, toks in it:
        if expect == "header":
            if toks[0] != "csp" or len(toks) != 3:
                raise ParseError("expected header 'csp <n> <m>'", line=lineno)
            n = _int(toks[1], lineno, "variable count")
            m = _int(toks[2], lineno, "constraint count")
            _check_header_size(n, "variable count", lineno)
            _check_header_size(m, "constraint count", lineno)
            domains = [2] * n
            expect = "body"
            continue
        if expect == "body":
            if toks[0] == "dom":
                if len(toks) != 3:
                    raise ParseError("expected 'dom <var> <size>'", line=lineno)
                var = _int(toks[1], lineno, "variable")
                size = _int(toks[2], lineno, "domain size")
                if not 1 <= var <= n:
                    raise ParseError("variable %d out of range" % var, line=lineno)
                if size < 2 or size > _MAX_HEADER:
                    raise ParseError("domain size %d out of range" % size, line=lineno)
                if constraints or scope is not None:
                    raise ParseError("dom line after a constraint", line=lineno)
                domains[var - 1] = size
                continue
            if toks[0] == "con":
                if scope is not None:
                    raise ParseError("constraint not closed by 'end'", line=lineno)
                if len(toks) < 2:
                    raise ParseError("expected 'con <k> <vars...>'", line=lineno)
                k = _int(toks[1], lineno, "scope size")
                if k < 1 or k > _MAX_HEADER or len(toks) != 2 + k:
                    raise ParseError("scope size mismatch", line=lineno)
                vs = [_int(t, lineno, "variable") for t in toks[2:]]
                for v in vs:
                    if not 1 <= v <= n:
                        raise ParseError("variable %d out of range" % v, line=lineno)
                if len(set(vs)) != len(vs):
                    raise ParseError("repeated variable in scope", line=lineno)
                scope = tuple(v - 1 for v in vs)
                want = k
                rows = []
                row_lines = []
                continue
            if toks[0] == "end":
                if scope is None:
                    raise ParseError("'end' outside a constraint", line=lineno)
                if len(set(rows)) != len(rows):
                    raise ParseError("duplicate violating tuple", line=row_lines[-1])
                constraints.append(Constraint(scope, tuple(rows)))
                scope = None
                continue
            if scope is None:
                raise ParseError("unrecognized line %r" % " ".join(toks), line=lineno)
            if len(toks) != want:
                raise ParseError(
                    "expected %d values, got %d" % (want, len(toks)), line=lineno
                )
            row = tuple(_int(t, lineno, "value") for t in toks)
            for v, a in zip(scope, row):
                if not 0 <= a < domains[v]:
                    raise ParseError(
                        "value %d out of domain of variable %d" % (a, v + 1), line=lineno
                    )
            rows.append(row)
            row_lines.append(lineno)
            continue
    if expect == "header":
        raise ParseError("empty input", line=1)
    if scope is not None:
        raise ParseError("constraint not closed by 'end'", line=lineno)
    if len(constraints) != m:
        raise ParseError(
            "declared %d constraints, found %d" % (m, len(constraints)), line=lineno
        )
    return CSPInstance(domains, constraints, name="csp")


def serialize(inst):
    """Write an instance in the generic-csp format (round-trips exactly)."""
    lines = ["csp %d %d" % (inst.n, inst.m)]
    for v, d in enumerate(inst.domain_sizes):
        if d != 2:
            lines.append("dom %d %d" % (v + 1, d))
    for c in inst.constraints:
        lines.append(
            "con %d %s" % (len(c.scope), " ".join(str(v + 1) for v in c.scope))
        )
        for row in sorted(c.violating):
            lines.append(" ".join(str(a) for a in row))
        lines.append("end")
    return "\n".join(lines) + "\n"


def load_file(path, kind="auto"):
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        return parse(fh.read(), kind=kind)
