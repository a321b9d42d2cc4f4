"""Sweep the KL coefficient and report in-domain gain vs shifted-domain retention."""
import argparse

import numpy as np

from strew.toy import ToyConfig, train_grpo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--betas", default="0,0.04,0.3,1,3")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--train-size", type=int, default=256)
    args = ap.parse_args()

    print("beta   in_domain  shifted  mean_kl(last 10%)")
    for beta in (float(b) for b in args.betas.split(",")):
        rows = []
        for seed in range(args.seeds):
            cfg = ToyConfig(seed=seed, steps=args.steps, train_size=args.train_size)
            cfg.grpo.kl_coefficient = beta
            r = train_grpo(cfg)
            tail = r.stats[-max(1, len(r.stats) // 10):]
            rows.append((r.in_domain["miou"], r.shifted["miou"], np.mean([s["mean_kl"] for s in tail])))
        m = np.mean(rows, axis=0)
        print(f"{beta:<6} {m[0]:.3f}      {m[1]:.3f}    {m[2]:.4f}")


if __name__ == "__main__":
    main()
