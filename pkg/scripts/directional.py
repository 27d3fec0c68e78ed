"""Hyperbolic vs Euclidean early exits on synthetic hierarchical data.

    python3 scripts/directional.py --seeds 0 1 2
"""

import argparse
import json
import logging

from hypee.experiments import run_directional


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=None, help="override the training length")
    ap.add_argument("--json", action="store_true", help="emit the criteria as JSON instead of a table")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    res = run_directional(args.seeds, {"epochs": args.epochs} if args.epochs else None)
    tight, loose = res.lookahead_precision((1.2, 2.0))
    if args.json:
        doc = dict(res.criteria(), seconds=res.seconds, precision_T1_2=tight.precision, precision_T2_0=loose.precision)
        print(json.dumps(doc, indent=2))
        return
    print(res.table())
    print(f"trigger accuracy {res.trigger_accuracy():.3f} vs exit-0 {res.exit0_accuracy():.3f}, "
          f"MACs saved {100 * res.trigger_savings():.1f}%")
    print(f"early-gate precision: class {res.early_gate_precision('class'):.3f}, "
          f"global {res.early_gate_precision('global'):.3f}")
    for p in (tight, loose):
        print(f"lookahead T={p.T}: precision {p.precision:.3f} ({p.matched}/{p.retrieved}), coverage {p.coverage:.1%}")
    for name, ok in res.criteria().items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"{res.seconds:.0f}s")


if __name__ == "__main__":
    main()
