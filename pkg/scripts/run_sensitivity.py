"""Sensitivity sweep of the four tuning parameters on a small QP suite.

Each of eta1_0, eta2_0, delta_0, and beta is varied over its range with the
others at defaults; the per-group mean objective/constraint evaluation counts
summarize how flat the performance surface is.
"""

import argparse
import sys

from sketchnewton.bench import sensitivity_sweep


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=3)
    args = parser.parse_args()

    problems = [
        {
            "id": "qp-unit",
            "kind": "qp",
            "Q": [[1.0, 0.0], [0.0, 1.0]],
            "g": [0.0, 0.0],
            "A": [[1.0, 1.0]],
            "b": [1.0],
        },
        {"id": "qp-rand-a", "kind": "qp", "n": 6, "m": 2, "seed": 41},
        {"id": "qp-rand-b", "kind": "qp", "n": 8, "m": 3, "seed": 42},
    ]
    groups = sensitivity_sweep(
        problems, {"seeds": list(range(args.seeds)), "methods": ["adasketch-gv"]}
    )
    print(f"{'parameter':>10} {'value':>10} {'mean obj/cons':>14} {'all converged':>14}")
    for g in groups:
        print(
            f"{g['param']:>10} {g['value']:>10.3g} {g['mean_obj_cons']:>14.2f} "
            f"{str(g['all_converged']):>14}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
