"""GRPO vs SFT on a narrow training pool: track shifted-domain mIoU while both keep training.

Writes the seed-averaged curves as CSV (step, grpo_in, grpo_shift, sft_in, sft_shift).
"""
import argparse
import csv

import numpy as np

from strew.toy import ToyConfig, train_grpo, train_sft


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=6000)
    ap.add_argument("--train-size", type=int, default=256)
    ap.add_argument("--eval-every", type=int, default=500)
    ap.add_argument("--kl", type=float, default=None, help="override the GRPO KL coefficient")
    ap.add_argument("--out", default="grpo_vs_sft.csv")
    args = ap.parse_args()

    curves = {"grpo": [], "sft": []}
    steps = None
    for seed in range(args.seeds):
        cfg = ToyConfig(seed=seed, steps=args.steps, train_size=args.train_size, eval_every=args.eval_every)
        if args.kl is not None:
            cfg.grpo.kl_coefficient = args.kl
        for name, train in (("grpo", train_grpo), ("sft", train_sft)):
            curve = train(cfg).curve
            steps = [c["step"] for c in curve]
            curves[name].append([[c["in_domain"], c["shifted"]] for c in curve])
        last = {k: curves[k][-1][-1][1] for k in curves}
        print(f"seed {seed}: final shifted mIoU  grpo {last['grpo']:.3f}  sft {last['sft']:.3f}")

    mean = {k: np.mean(v, axis=0) for k, v in curves.items()}
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "grpo_in", "grpo_shift", "sft_in", "sft_shift"])
        for i, step in enumerate(steps):
            w.writerow([step, *(f"{x:.4f}" for x in (*mean["grpo"][i], *mean["sft"][i]))])
    for k in ("grpo", "sft"):
        shift = mean[k][:, 1]
        print(f"{k}: shifted peak {shift.max():.3f} at step {steps[int(shift.argmax())]}, final {shift[-1]:.3f}")


if __name__ == "__main__":
    main()
