"""Noise and denoise points on the line y = x in two dimensions."""
import argparse
from pathlib import Path

import numpy as np

from girsanov_diffusion.config import ExperimentConfig
from girsanov_diffusion.experiments import read_csv, run_forward, run_reverse


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/line")
    parser.add_argument("--steps", type=int, default=1000)
    parser.add_argument("--paths", type=int, default=2000)
    args = parser.parse_args()
    config = ExperimentConfig(data="line_y_equals_x", d=2, data_mean=[0.0, 0.0], data_var=[1.0, 1.0],
                              T=3.0, N=args.steps, n_paths=args.paths, n_points=200,
                              out_dir=args.out_dir)
    run_forward(config)
    bundle = run_reverse(config)
    samples = Path(args.out_dir) / "samples"
    for kind in ("em_exact", "ddpm_exact", "em_perturbed", "ddpm_perturbed"):
        x = read_csv(samples / f"reverse_{kind}.csv")[1]
        off_line = np.median(np.abs(x[:, 0] - x[:, 1])) / np.sqrt(2)
        w2 = ", ".join(f"{v:.3f}" for v in bundle.metrics[f"recovery_w2_{kind}"])
        print(f"{kind:15s} median distance to line {off_line:.4f}   per-coordinate W2 {w2}")


if __name__ == "__main__":
    main()
