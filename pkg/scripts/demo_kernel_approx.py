#!/usr/bin/env python3
"""Train 4 boxes to mimic a Laplacian-of-Gaussian and export them as SVG."""

import argparse

from satconv.cli import render_boxes_svg
from satconv.train import log_target_kernel, train_kernel_approx


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--n-boxes", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="learned_boxes.svg")
    args = ap.parse_args()

    target = log_target_kernel(9, sigma=1.4)
    res = train_kernel_approx(target, args.n_boxes, args.steps, args.seed)
    print(f"relative kernel error: {res.initial_error:.4f} -> {res.final_error:.4f}")
    for p, w in zip(res.boxes, res.mix_weights):
        edges = ", ".join(f"{float(t):+.3f}" for t in p.thetas)
        print(f"  box ({edges})  weight {w:+.3f}")
    with open(args.out, "w") as f:
        f.write(render_boxes_svg(res.boxes))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
