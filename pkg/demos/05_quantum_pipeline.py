"""
Idealised quantum pipeline on the damped rotation problem.

The linear solve is exact up to an injected error of size epsilon_L;
measuring the time register and keeping the second half yields the
final state. The resource estimate evaluates the oracle-call formulas
with unit constants.
"""

import json

from qlinode import shipped_problem
from qlinode.encoder import build_system, choose_time_steps
from qlinode.io import dumps
from qlinode.methods import REGISTRY
from qlinode.qlsa import error_budget, history_state, postselect_final, resource_estimate
from qlinode.reference import eigen_condition, exact_solution

prob = shipped_problem("damped_rotation")
method = REGISTRY["bdf2"]
spectral = eigen_condition(prob.A)
epsilon = 1e-2

N_t = min(choose_time_steps(prob, method, epsilon, spectral.kappa_V).N_t, 512)
state = history_state(build_system(prob, method, N_t))
eps_L = error_budget(prob, N_t, epsilon)
res = postselect_final(state, exact_solution(prob, prob.t_final), eps_L, trials=100, rng_seed=7)

print(f"N_t = {N_t}, epsilon_L = {eps_L:.3g}")
print(json.dumps(res.to_dict(), indent=2))
print(dumps(resource_estimate(prob, method, spectral, epsilon).to_dict()))
