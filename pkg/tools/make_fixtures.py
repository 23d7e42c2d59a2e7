"""Regenerate the committed test fixtures (deterministic; see README)."""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from rydparity.encoding import encode_problem, random_bipartite_problem
from rydparity.gate import build_calibration, check_return_to_basis, default_waypoints
from rydparity.plaquette import PlaquetteConfig

V = 251.32741228718345  # 2 pi x 40 MHz
FIXDIR = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")


def main():
    os.makedirs(FIXDIR, exist_ok=True)
    config = PlaquetteConfig(interaction=V)

    cal = build_calibration(default_waypoints(V), config, epsilon=1e-3, seed=0)
    check_return_to_basis(cal)
    cal.save(os.path.join(FIXDIR, "calibration_eps1e-3.json"))
    print("calibration_eps1e-3.json: T_gate_worst =", cal.t_gate_worst)

    problem = random_bipartite_problem(4, 5, np.random.default_rng(1234))
    with open(os.path.join(FIXDIR, "problem_4x5.json"), "w") as fh:
        json.dump(problem.to_dict(), fh, indent=1)
    layout = encode_problem(problem)
    layout.save(os.path.join(FIXDIR, "layout_4x5.json"))
    print("problem_4x5.json / layout_4x5.json: K =", layout.num_qubits)

    small = random_bipartite_problem(2, 2, np.random.default_rng(7))
    with open(os.path.join(FIXDIR, "problem_2x2.json"), "w") as fh:
        json.dump(small.to_dict(), fh, indent=1)
    print("problem_2x2.json")


if __name__ == "__main__":
    main()
