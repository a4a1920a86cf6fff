"""Mean iteration duration of full, static_p and DTUR under several delay models.

Durations depend only on the delays and the plans, so no model is trained.

    python scripts/timing_comparison.py --n 8 --iters 5000
"""
import argparse

import numpy as np

from cbdybw.scheduler import Scheduler, StrategyConfig
from cbdybw.straggler import DelayModel, draw, duration_partial
from cbdybw.topology import coverage_path, generate_graph


def delay_models(n: int, seed: int) -> dict[str, DelayModel]:
    return {
        "exponential": DelayModel("exponential", seed=seed),
        "shifted_exponential": DelayModel("shifted_exponential", seed=seed),
        "lognormal(sigma=1)": DelayModel("lognormal", sigma=1.0, seed=seed),
        "one_slow_worker": DelayModel("fixed_heterogeneous", means=(1.0,) * (n - 1) + (5.0,), jitter=0.1, seed=seed),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--p", type=float, default=0.4)
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    g = generate_graph(args.n, "random", args.p, args.seed)
    path = coverage_path(g)
    print(f"graph: {args.n} workers, {len(g.edges)} edges; coverage path d = {path.length_d}")
    print(f"{'delay model':22s} {'full':>8s} {'static_p':>9s} {'dtur':>8s} {'dtur/full':>10s}")
    for name, model in delay_models(args.n, args.seed).items():
        means = {}
        for kind in ("full", "static_p", "dtur"):
            sched = Scheduler(g, StrategyConfig(kind), path)
            durations = []
            for k in range(1, args.iters + 1):
                d = draw(model, k, args.n)
                durations.append(duration_partial(d, sched.plan(d)))
            means[kind] = float(np.mean(durations))
        print(
            f"{name:22s} {means['full']:8.3f} {means['static_p']:9.3f} {means['dtur']:8.3f}"
            f" {means['dtur'] / means['full']:10.3f}"
        )


if __name__ == "__main__":
    main()
