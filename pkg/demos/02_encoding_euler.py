"""
The block linear system for explicit Euler with four time steps.

The first half of the rows advance x' = a x + b; the second half copy the
final value forward so that half of the history state holds the answer.
"""

import numpy as np

from qlinode import OdeProblem, build_system
from qlinode.methods import REGISTRY
from qlinode.qlsa import history_state

prob = OdeProblem([[-0.5]], [1.0], [1.0], delta_t=1.0)
system = build_system(prob, REGISTRY["euler"], 4)

np.set_printoptions(precision=3, suppress=True)
print("calA =")
print(system.to_dense())
print("rhs  =", system.calb)

x = np.linalg.solve(system.to_dense(), system.calb)
print("x    =", x)

state = history_state(system)
print("time-register probabilities:", state.block_probabilities)
print("oracle calls while assembling:", system.counter.as_dict())
