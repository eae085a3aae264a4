"""CP-net representation, validation, and induced-order semantics.

A CP-net over n binary variables is a dependency DAG plus one conditional
preference table (CPT) per variable.  Every CPT row fixes a complete
assignment to the variable's parents and states which of the two domain
values is preferred under that assignment.  The net induces a strict
partial order over all 2^n outcomes through chains of worsening flips.

Bit conventions used throughout the package (pinned so encodings and
serialized artifacts are deterministic):

* An outcome is a tuple of value indices, one per variable, in variable
  index order.  Its integer index treats variable 0 as the most
  significant bit.
* A CPT row index encodes the parent assignment with the lowest-index
  parent as the most significant bit; bit value equals domain value index.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterator, Sequence

import numpy as np

Outcome = tuple  # value index per variable, length n

DEFAULT_BUDGET_N = 12
BUDGET_ENV_VAR = "CPMETRIC_BUDGET_N"


class CPNetError(ValueError):
    """Base class for CP-net errors."""


class CPNetFormatError(CPNetError):
    """Malformed CP-net file (bad JSON, missing keys, wrong types)."""


class CPNetValidationError(CPNetError):
    """Structurally well-formed but semantically invalid CP-net."""


class BudgetExceededError(CPNetError):
    """An operation over all 2^n outcomes was asked for n above the budget."""


@dataclass(frozen=True)
class Variable:
    index: int
    name: str
    domain: tuple  # two value labels; position is the value index

    def __post_init__(self):
        if len(self.domain) != 2:
            raise CPNetValidationError(
                f"variable {self.name!r}: domain must have exactly 2 values, "
                f"got {len(self.domain)}"
            )


@dataclass(frozen=True)
class CPTable:
    """Conditional preference table for one variable.

    ``prefs[k]`` is the preferred value index of ``variable`` under the
    parent assignment decoded from row index ``k`` (lowest-index parent =
    most significant bit).
    """

    variable: int
    parents: tuple  # sorted ascending variable indices
    prefs: tuple    # length 2 ** len(parents), entries in {0, 1}


@dataclass(frozen=True)
class CPNet:
    variables: tuple  # of Variable, in index order
    tables: tuple     # of CPTable, tables[i] belongs to variables[i]

    @property
    def n(self) -> int:
        return len(self.variables)

    def names(self) -> tuple:
        return tuple(v.name for v in self.variables)


def resolve_budget(budget_n: int | None = None) -> int:
    """Effective outcome-space budget: explicit arg, else env var, else 12."""
    if budget_n is not None:
        return int(budget_n)
    return int(os.environ.get(BUDGET_ENV_VAR, DEFAULT_BUDGET_N))


def _check_budget(n: int, budget_n: int | None):
    budget = resolve_budget(budget_n)
    if n > budget:
        raise BudgetExceededError(
            f"n={n} exceeds the outcome-space budget n<={budget} "
            f"(override with {BUDGET_ENV_VAR} or budget_n=)"
        )


def parent_row_index(parents: Sequence[int], outcome: Outcome) -> int:
    """Row index of the parent assignment found in ``outcome``."""
    k = 0
    for p in parents:
        k = (k << 1) | outcome[p]
    return k


def preferred_value(net: CPNet, var: int, outcome: Outcome) -> int:
    """Preferred value index of ``var`` given the parents' values in ``outcome``."""
    t = net.tables[var]
    return t.prefs[parent_row_index(t.parents, outcome)]


def outcome_index(outcome: Outcome) -> int:
    """Integer index of an outcome; variable 0 is the most significant bit."""
    k = 0
    for v in outcome:
        k = (k << 1) | v
    return k


def index_outcome(idx: int, n: int) -> Outcome:
    return tuple((idx >> (n - 1 - i)) & 1 for i in range(n))


def edges(net: CPNet) -> list:
    """Dependency edges as (parent, child) index pairs."""
    return [(p, t.variable) for t in net.tables for p in t.parents]


def validate(net: CPNet) -> None:
    """Check all CP-net invariants; raise CPNetValidationError on the first violation.

    Checks: variable indexing and unique names, binary domains, one complete
    CPT per variable, acyclic dependency graph, and no degenerate edges.
    """
    n = net.n
    if n < 1:
        raise CPNetValidationError("CP-net must have at least one variable")
    names = [v.name for v in net.variables]
    if len(set(names)) != n:
        dup = sorted({x for x in names if names.count(x) > 1})
        raise CPNetValidationError(f"duplicate variable names: {dup}")
    for i, v in enumerate(net.variables):
        if v.index != i:
            raise CPNetValidationError(
                f"variable {v.name!r} has index {v.index}, expected {i}"
            )
        if len(set(v.domain)) != 2:
            raise CPNetValidationError(
                f"variable {v.name!r}: domain values must be distinct"
            )
    if len(net.tables) != n:
        raise CPNetValidationError(
            f"expected {n} cp-tables, got {len(net.tables)}"
        )
    for i, t in enumerate(net.tables):
        name = net.variables[i].name
        if t.variable != i:
            raise CPNetValidationError(
                f"table {i} is declared for variable {t.variable} ({name!r})"
            )
        if list(t.parents) != sorted(set(t.parents)):
            raise CPNetValidationError(
                f"variable {name!r}: parents must be sorted and distinct"
            )
        if any(p == i or p < 0 or p >= n for p in t.parents):
            raise CPNetValidationError(
                f"variable {name!r}: parent indices out of range"
            )
        if len(t.prefs) != 2 ** len(t.parents):
            raise CPNetValidationError(
                f"variable {name!r}: cp-table has {len(t.prefs)} rows, "
                f"needs one per parent assignment ({2 ** len(t.parents)})"
            )
        if any(v not in (0, 1) for v in t.prefs):
            raise CPNetValidationError(
                f"variable {name!r}: preference entries must be value indices 0 or 1"
            )
    _check_acyclic(net)
    for parent, child in edges(net):
        if is_degenerate_edge(net, parent, child):
            pn = net.variables[parent].name
            cn = net.variables[child].name
            raise CPNetValidationError(f"degenerate edge {pn}→{cn}")


def _check_acyclic(net: CPNet) -> None:
    order = _kahn_order(net)
    if order is None:
        raise CPNetValidationError("dependency graph has a cycle")


def _kahn_order(net: CPNet):
    n = net.n
    indeg = [len(t.parents) for t in net.tables]
    children = [[] for _ in range(n)]
    for p, c in edges(net):
        children[p].append(c)
    ready = sorted(i for i in range(n) if indeg[i] == 0)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        changed = False
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
                changed = True
        if changed:
            ready.sort()
    return order if len(order) == n else None


def topological_order(net: CPNet) -> list:
    """Canonical topological order: parents first, ties by ascending index."""
    order = _kahn_order(net)
    if order is None:
        raise CPNetValidationError("dependency graph has a cycle")
    return order


def is_degenerate_edge(net: CPNet, parent: int, child: int) -> bool:
    """True iff the child's preference never actually depends on the parent.

    Compares the child's rows across the parent's two values for every
    assignment to the remaining parents.
    """
    t = net.tables[child]
    if parent not in t.parents:
        raise CPNetError(
            f"no edge {net.variables[parent].name!r}→"
            f"{net.variables[child].name!r}"
        )
    pos = t.parents.index(parent)
    shift = len(t.parents) - 1 - pos
    bit = 1 << shift
    for k in range(len(t.prefs)):
        if not k & bit and t.prefs[k] != t.prefs[k | bit]:
            return False
    return True


def optimal_outcome(net: CPNet) -> Outcome:
    """Most preferred outcome: sweep in topological order picking each
    variable's preferred value given the already-fixed parents."""
    assignment = [0] * net.n
    for v in topological_order(net):
        assignment[v] = preferred_value(net, v, assignment)
    return tuple(assignment)


def worsening_flips(net: CPNet, outcome: Outcome) -> set:
    """Outcomes one worsening flip away: some variable currently at its
    preferred value (given the outcome's parent assignment) moves to the
    less preferred one."""
    flips = set()
    for i in range(net.n):
        if outcome[i] == preferred_value(net, i, outcome):
            flipped = list(outcome)
            flipped[i] ^= 1
            flips.add(tuple(flipped))
    return flips


def dominates(net: CPNet, o1: Outcome, o2: Outcome, budget_n: int | None = None) -> bool:
    """True iff a chain of worsening flips leads from o1 to o2 (breadth-first
    search over the flip graph; irreflexive by definition)."""
    _check_budget(net.n, budget_n)
    if o1 == o2:
        return False
    frontier = [o1]
    seen = {o1}
    while frontier:
        nxt = []
        for o in frontier:
            for f in worsening_flips(net, o):
                if f == o2:
                    return True
                if f not in seen:
                    seen.add(f)
                    nxt.append(f)
        frontier = nxt
    return False


class PartialOrder:
    """Strict partial order over all 2^n outcomes of a CP-net.

    ``dominance[i, j]`` is True iff outcome index i dominates outcome
    index j (outcome indices per :func:`outcome_index`).  The relation is
    the transitive closure of the worsening-flip graph: irreflexive,
    antisymmetric, transitive.
    """

    def __init__(self, n_outcomes: int, dominance: np.ndarray):
        self.n_outcomes = n_outcomes
        self.dominance = dominance

    def dom(self, i: int, j: int) -> bool:
        return bool(self.dominance[i, j])

    def __eq__(self, other):
        return (
            isinstance(other, PartialOrder)
            and self.n_outcomes == other.n_outcomes
            and bool(np.array_equal(self.dominance, other.dominance))
        )


def _flip_successors(net: CPNet) -> list:
    """Worsening-flip successors (as outcome indices) for every outcome index."""
    n = net.n
    succs = []
    for idx in range(1 << n):
        o = index_outcome(idx, n)
        succs.append(
            [idx ^ (1 << (n - 1 - i))
             for i in range(n)
             if o[i] == preferred_value(net, i, o)]
        )
    return succs


def induced_order(net: CPNet, budget_n: int | None = None) -> PartialOrder:
    """Materialize the induced partial order as a dominance matrix.

    Reachability over the (acyclic) worsening-flip graph is accumulated in
    reverse topological order using integer bitsets, then unpacked to a
    boolean matrix.
    """
    _check_budget(net.n, budget_n)
    size = 1 << net.n
    succs = _flip_successors(net)

    indeg = [0] * size
    for ss in succs:
        for s in ss:
            indeg[s] += 1
    ready = [i for i in range(size) if indeg[i] == 0]
    topo = []
    while ready:
        v = ready.pop()
        topo.append(v)
        for s in succs[v]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
    if len(topo) != size:
        raise CPNetValidationError("worsening-flip graph has a cycle")

    reach = [0] * size
    for v in reversed(topo):
        bits = 0
        for s in succs[v]:
            bits |= reach[s] | (1 << s)
        reach[v] = bits

    nbytes = (size + 7) // 8
    packed = np.frombuffer(
        b"".join(r.to_bytes(nbytes, "little") for r in reach), dtype=np.uint8
    ).reshape(size, nbytes)
    dominance = np.unpackbits(packed, axis=1, bitorder="little")[:, :size].astype(bool)
    return PartialOrder(size, dominance)


# --- enumeration -----------------------------------------------------------


def _default_variables(n: int) -> tuple:
    return tuple(
        Variable(i, f"X{i}", (f"x{i}", f"~x{i}")) for i in range(n)
    )


def _nondegenerate_fillings(k: int) -> list:
    """All preference tables over k parents where every parent matters."""
    out = []
    for prefs in product((0, 1), repeat=1 << k):
        if all(
            any(prefs[row] != prefs[row | (1 << shift)]
                for row in range(1 << k) if not row & (1 << shift))
            for shift in range(k)
        ):
            out.append(prefs)
    return out


def _acyclic(parent_sets: Sequence[tuple], n: int) -> bool:
    indeg = [len(ps) for ps in parent_sets]
    children = [[] for _ in range(n)]
    for c, ps in enumerate(parent_sets):
        for p in ps:
            children[p].append(c)
    ready = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return seen == n


def _parent_set_choices(n: int, max_indegree: int) -> list:
    """Per-variable candidate parent sets, smallest first."""
    choices = []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        sets = []
        for k in range(min(max_indegree, n - 1) + 1):
            sets.extend(combinations(others, k))
        choices.append(sets)
    return choices


def enumerate_cpnets(
    n: int, max_indegree: int | None = None
) -> Iterator[CPNet]:
    """Yield every distinct acyclic non-degenerate binary CP-net on n variables.

    Iterates all acyclic parent-set combinations, then all CPT fillings in
    which each listed parent has a real effect.  Distinctness holds by
    construction: non-degeneracy makes the parent set of each table unique
    for its preference function.  Combinatorial budget: n <= 4.
    """
    if n > 4:
        raise BudgetExceededError(
            f"exhaustive enumeration is limited to n<=4 (got n={n})"
        )
    if max_indegree is None:
        max_indegree = n - 1
    variables = _default_variables(n)
    fillings = {k: _nondegenerate_fillings(k) for k in range(min(max_indegree, n - 1) + 1)}
    table_cache = {}

    def tables_for(var: int, parents: tuple) -> list:
        key = (var, parents)
        cached = table_cache.get(key)
        if cached is None:
            cached = [CPTable(var, parents, f) for f in fillings[len(parents)]]
            table_cache[key] = cached
        return cached

    for parent_sets in product(*_parent_set_choices(n, max_indegree)):
        if not _acyclic(parent_sets, n):
            continue
        per_var = [tables_for(i, ps) for i, ps in enumerate(parent_sets)]
        for tables in product(*per_var):
            yield CPNet(variables, tables)


def count_cpnets(n: int, max_indegree: int | None = None) -> int:
    """Number of distinct acyclic non-degenerate binary CP-nets on n variables.

    Computed without enumerating fillings: sum over acyclic parent-set
    combinations of the product of per-variable non-degenerate table counts
    (inclusion-exclusion over parents that could be ignored).
    """
    if max_indegree is None:
        max_indegree = n - 1

    def ndeg_count(k: int) -> int:
        from math import comb

        return sum((-1) ** j * comb(k, j) * 2 ** (2 ** (k - j)) for j in range(k + 1))

    counts = {k: ndeg_count(k) for k in range(min(max_indegree, n - 1) + 1)}
    total = 0
    for parent_sets in product(*_parent_set_choices(n, max_indegree)):
        if _acyclic(parent_sets, n):
            prod = 1
            for ps in parent_sets:
                prod *= counts[len(ps)]
            total += prod
    return total


# --- JSON format ------------------------------------------------------------
#
# Top-level object:
#   {"variables": [{"name": str,
#                   "domain": [str, str],
#                   "parents": [parent names],
#                   "cpt": [{"given": {parentName: valueLabel, ...},
#                            "order": [preferredLabel, otherLabel]}, ...]}]}
#
# Parent assignments must cover all combinations exactly once.  Serialization
# emits variables in index order, parents in ascending variable-index order,
# and cpt rows in lexicographic parent-assignment order (value indices, most
# significant = lowest-index parent).


def serialize_cpnet(net: CPNet) -> str:
    doc = {"variables": []}
    for v in net.variables:
        t = net.tables[v.index]
        rows = []
        for k, pref in enumerate(t.prefs):
            given = {}
            for pos, p in enumerate(t.parents):
                bit = (k >> (len(t.parents) - 1 - pos)) & 1
                given[net.variables[p].name] = net.variables[p].domain[bit]
            rows.append(
                {"given": given, "order": [v.domain[pref], v.domain[1 - pref]]}
            )
        doc["variables"].append(
            {
                "name": v.name,
                "domain": list(v.domain),
                "parents": [net.variables[p].name for p in t.parents],
                "cpt": rows,
            }
        )
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def parse_cpnet(text: str) -> CPNet:
    """Parse the JSON CP-net format and validate the result.

    Raises CPNetFormatError for malformed input and CPNetValidationError for
    semantic violations (cycle, incomplete cp-table, degenerate edge,
    duplicate names), each naming the offending variable or edge.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CPNetFormatError(f"invalid JSON: {e}") from e
    if not isinstance(doc, dict) or "variables" not in doc:
        raise CPNetFormatError('top-level object must contain "variables"')
    specs = doc["variables"]
    if not isinstance(specs, list) or not specs:
        raise CPNetFormatError('"variables" must be a non-empty array')

    names = []
    for i, spec in enumerate(specs):
        if not isinstance(spec, dict):
            raise CPNetFormatError(f"variables[{i}] must be an object")
        for key in ("name", "domain", "parents", "cpt"):
            if key not in spec:
                raise CPNetFormatError(f"variables[{i}] is missing {key!r}")
        names.append(spec["name"])
    if len(set(names)) != len(names):
        dup = sorted({x for x in names if names.count(x) > 1})
        raise CPNetValidationError(f"duplicate variable names: {dup}")
    index_of = {name: i for i, name in enumerate(names)}

    variables = []
    tables = []
    for i, spec in enumerate(specs):
        name = spec["name"]
        domain = spec["domain"]
        if not isinstance(domain, list) or len(domain) != 2:
            raise CPNetFormatError(
                f"variable {name!r}: domain must be an array of 2 labels"
            )
        variables.append(Variable(i, name, tuple(domain)))

        try:
            parents = tuple(sorted(index_of[p] for p in spec["parents"]))
        except KeyError as e:
            raise CPNetFormatError(
                f"variable {name!r}: unknown parent {e.args[0]!r}"
            ) from e
        if len(set(parents)) != len(parents):
            raise CPNetValidationError(
                f"variable {name!r}: repeated parent"
            )

        rows = spec["cpt"]
        if not isinstance(rows, list):
            raise CPNetFormatError(f"variable {name!r}: cpt must be an array")
        prefs = [None] * (2 ** len(parents))
        for row in rows:
            if not isinstance(row, dict) or "given" not in row or "order" not in row:
                raise CPNetFormatError(
                    f"variable {name!r}: each cpt row needs 'given' and 'order'"
                )
            given = row["given"]
            if set(given) != {names[p] for p in parents}:
                raise CPNetValidationError(
                    f"variable {name!r}: cpt row conditions {sorted(given)} do not "
                    f"match parents {[names[p] for p in parents]}"
                )
            k = 0
            for p in parents:
                pdomain = specs[p]["domain"]
                label = given[names[p]]
                if label not in pdomain:
                    raise CPNetFormatError(
                        f"variable {name!r}: {label!r} is not a value of {names[p]!r}"
                    )
                k = (k << 1) | pdomain.index(label)
            if prefs[k] is not None:
                raise CPNetValidationError(
                    f"variable {name!r}: duplicate cpt row for {given}"
                )
            order = row["order"]
            if sorted(order) != sorted(domain):
                raise CPNetFormatError(
                    f"variable {name!r}: order {order} is not a total order of {domain}"
                )
            prefs[k] = domain.index(order[0])
        missing = [k for k, v in enumerate(prefs) if v is None]
        if missing:
            raise CPNetValidationError(
                f"variable {name!r}: cp-table is missing {len(missing)} of "
                f"{len(prefs)} parent assignments"
            )
        tables.append(CPTable(i, parents, tuple(prefs)))

    net = CPNet(tuple(variables), tuple(tables))
    validate(net)
    return net


def load_cpnet(path) -> CPNet:
    with open(path, encoding="utf-8") as f:
        return parse_cpnet(f.read())


def save_cpnet(net: CPNet, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_cpnet(net))
