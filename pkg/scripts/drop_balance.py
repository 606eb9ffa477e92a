"""How the adaptive drop rule keeps RGB and depth drops balanced over training length.

    python scripts/drop_balance.py --p 0.5 --seeds 10
"""

import argparse

import numpy as np

from rgbd_panoptic.scheduler import simulate


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--p", type=float, default=0.5)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--steps", type=int, nargs="+", default=[100, 1000, 10000, 50000])
    args = parser.parse_args()

    print(f"{'steps':>7} {'drop freq':>10} {'imbalance':>10} {'max run. imb.':>14}")
    for steps in args.steps:
        runs = [simulate(args.p, steps, seed) for seed in range(args.seeds)]
        print(
            f"{steps:>7} {np.mean([r['drop_frequency'] for r in runs]):>10.4f} "
            f"{np.mean([r['imbalance_fraction'] for r in runs]):>10.4f} "
            f"{np.mean([r['max_running_imbalance'] for r in runs]):>14.1f}"
        )


if __name__ == "__main__":
    main()
