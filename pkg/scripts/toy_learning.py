"""Train the toy policy with GRPO over several seeds and compare against a uniform-random baseline."""
import argparse
import json
import time

from strew.toy import IN_DOMAIN, ToyConfig, gen_tasks, train_grpo, uniform_random_miou


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--out", default="toy_learning.json")
    args = ap.parse_args()

    rows = []
    for seed in range(args.seeds):
        cfg = ToyConfig(seed=seed, steps=args.steps)
        eval_tasks = gen_tasks(seed + 10_000, cfg.eval_size, cfg.kind, IN_DOMAIN, cfg)
        baseline = uniform_random_miou(eval_tasks, cfg.n_start, cfg.n_len, seed=seed)
        t0 = time.perf_counter()
        report = train_grpo(cfg)
        row = {
            "seed": seed,
            "baseline_miou": baseline,
            "initial_miou": report.initial_in_domain["miou"],
            "final_miou": report.in_domain["miou"],
            "final_shifted_miou": report.shifted["miou"],
            "seconds": round(time.perf_counter() - t0, 1),
        }
        rows.append(row)
        print(f"seed {seed}: baseline {baseline:.3f}  init {row['initial_miou']:.3f}  final {row['final_miou']:.3f}  ({row['seconds']}s)")
    with open(args.out, "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
