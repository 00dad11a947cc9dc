"""Run every stage with the default experiment and print the headline numbers."""
import argparse
import json

from girsanov_diffusion.config import ExperimentConfig, load
from girsanov_diffusion.experiments import run_all


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="optional key = value config file")
    parser.add_argument("--out-dir", default="out/figures")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    config = load(args.config) if args.config else ExperimentConfig()
    config = config.replace(out_dir=args.out_dir, master_seed=args.seed)
    bundle = run_all(config)
    for name, path in sorted(bundle.tables.items()):
        print(f"{name:28s} {path}")
    print(json.dumps(bundle.metrics, indent=2, sort_keys=True, default=float))


if __name__ == "__main__":
    main()
