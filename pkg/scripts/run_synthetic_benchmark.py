"""Cross-validated accuracy of every method over code lengths on synthetic specimens.

    python3 scripts/run_synthetic_benchmark.py --out results/synth
"""
import argparse
import time

from cellattr.dataset import make_folds
from cellattr.experiments import METHODS, ExperimentConfig, check_report, sweep_code_length
from cellattr.featmap import featurize
from cellattr.synth import SynthConfig, generate


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results/synth")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--bits", default="6,12,24,48,96")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--specimens-per-class", type=int, default=40)
    args = p.parse_args()

    bits = [int(b) for b in args.bits.split(",")]
    methods = args.methods.split(",")
    data = generate(SynthConfig(seed=args.seed, specimens_per_class=args.specimens_per_class))
    plan = make_folds(data, args.folds, len(data) // 2, seed=args.seed)
    start = time.perf_counter()
    report = sweep_code_length(featurize(data), plan, methods, bits, ExperimentConfig(),
                               seed=args.seed)
    check_report(report)
    report.write(args.out)
    print(report.summary(), end="")
    print(f"{time.perf_counter() - start:.0f}s, written to {args.out}")


if __name__ == "__main__":
    main()
