#!/usr/bin/env python3
# Conditional preference networks: build one, query its induced order.
#
# A CP-net is a DAG over variables plus one conditional preference table
# per variable.  Here: four binary variables A, B, C, D where C's
# preference depends on A and B (prefers c when they agree) and D follows C.

import numpy as np

from cpmetric import (
    CPNet, CPTable, Variable,
    dominates, induced_order, optimal_outcome, outcome_index,
    parse_cpnet, serialize_cpnet, topological_order, validate,
    worsening_flips,
)

variables = (
    Variable(0, "A", ("a", "-a")),
    Variable(1, "B", ("b", "-b")),
    Variable(2, "C", ("c", "-c")),
    Variable(3, "D", ("d", "-d")),
)
tables = (
    CPTable(0, (), (0,)),             # a > -a
    CPTable(1, (), (0,)),             # b > -b
    CPTable(2, (0, 1), (0, 1, 1, 0)), # c preferred iff A and B agree
    CPTable(3, (2,), (0, 1)),         # d preferred iff C = c
)
net = CPNet(variables, tables)
validate(net)


def pretty(outcome):
    return " ".join(
        f"{v.domain[val]:>2}" for v, val in zip(net.variables, outcome)
    )


print("variables:", ", ".join(v.name for v in net.variables))
print("edges:", [(net.variables[p].name, net.variables[t.variable].name)
                 for t in net.tables for p in t.parents])
print("topological order:", [net.variables[i].name for i in topological_order(net)])

best = optimal_outcome(net)
print("\nmost preferred outcome:", pretty(best))

print("worsening flips from the top:")
for flip in sorted(worsening_flips(net, best)):
    print("   ", pretty(best), "->", pretty(flip))

# Dominance = existence of a chain of worsening flips.
worst = (1, 1, 1, 0)  # -a -b -c d: nothing left to worsen
print("\nworsening flips from", pretty(worst), "->", worsening_flips(net, worst) or "none")
print(f"{pretty(best)} dominates {pretty(worst)}:",
      dominates(net, best, worst))

# Outcomes differing in two independent choices stay incomparable.
po = induced_order(net)
n_comparable = int(po.dominance.sum())
print(f"\ninduced order over {po.n_outcomes} outcomes:"
      f" {n_comparable} of {po.n_outcomes * (po.n_outcomes - 1)} ordered pairs comparable")
print("the top dominates everything:",
      bool(po.dominance[outcome_index(best)].sum() == po.n_outcomes - 1))

# The JSON format round-trips.
assert parse_cpnet(serialize_cpnet(net)) == net
print("\nserialized form round-trips; first lines:")
print("\n".join(serialize_cpnet(net).splitlines()[:9]))
