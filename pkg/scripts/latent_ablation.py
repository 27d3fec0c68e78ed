"""Per-exit accuracy and cumulative MACs across latent sizes, both geometries.

    python3 scripts/latent_ablation.py --dims 8 16 32 64 128 --epochs 20
"""

import argparse
import logging

from hypee.experiments import ABLATION_DIMS, run_latent_ablation


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=list(ABLATION_DIMS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--tangent-clip", type=float, default=10.0, help="0 disables the clip")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    res = run_latent_ablation(args.dims, args.seed, args.epochs, tangent_clip=args.tangent_clip or None)
    print(res.table())
    print(f"costs monotone: {res.costs_monotone()}  ({res.seconds:.0f}s)")


if __name__ == "__main__":
    main()
