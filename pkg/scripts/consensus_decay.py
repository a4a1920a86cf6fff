"""Deviation of the mixing-matrix product from uniform averaging over a DTUR run.

Prints k, deviation of Phi_{k:1}, the fitted decay envelope and the literal bound.

    python scripts/consensus_decay.py --n 6 --K 300 --every 20
"""
import argparse

from cbdybw.config import config_from_dict
from cbdybw.consensus import ProductChain, consensus_deviation, geometric_envelope, lemma2_bound, multiply_chain
from cbdybw.engine import run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--K", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--every", type=int, default=20)
    args = ap.parse_args()

    cfg = config_from_dict(
        {"graph": {"kind": "random", "n": args.n}, "dataset": {"kind": "synth"}, "strategy": "dtur", "K": args.K, "seed": args.seed}
    )
    mats = []
    res = run(cfg, observer=lambda d, plan, P: mats.append(P))
    b = res.path.length_d
    chain = ProductChain.identity(args.n)
    rows = []
    for M in mats:
        chain = multiply_chain(chain, M)
        rows.append((chain.end_k, consensus_deviation(chain), lemma2_bound(chain, args.n, b)))
    beta = chain.beta
    print(f"d = B = {b}, beta = {beta:.4f}")
    print("k,deviation,envelope,bound")
    for k, dev, bound in rows:
        if k == 1 or k % args.every == 0:
            env = geometric_envelope(rows[0][1], beta, args.n, b, k - 1)
            print(f"{k},{dev:.3e},{env:.3e},{bound:.3e}")


if __name__ == "__main__":
    main()
