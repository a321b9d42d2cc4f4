"""Two-pass clue perception vs a single pass on a synthetic grounded-QA suite, swept over the fps boost."""
import argparse

from strew.clue import ClueConfig, PerceptionMockClient, run_batch, single_pass_choice
from strew.data import synth_mirror


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--miss-rate", type=float, default=0.05)
    ap.add_argument("--boosts", default="1,1.5,2,4")
    args = ap.parse_args()

    tasks = synth_mirror(args.seed, "gqa", args.n)
    client = PerceptionMockClient(tasks, miss_rate=args.miss_rate)
    single = sum(single_pass_choice(client, t) == t.gt.choice for t in tasks) / len(tasks)
    print(f"single pass accuracy {single:.3f}")
    for boost in (float(b) for b in args.boosts.split(",")):
        sessions = run_batch(client, tasks, ClueConfig(delta_fps=boost))
        acc = sum(s.final_choice() == t.gt.choice for s, t in zip(sessions, tasks)) / len(tasks)
        calls = sum(s.n_calls for s in sessions) / len(sessions)
        print(f"fps boost {boost:>4}: two-pass accuracy {acc:.3f}  calls/item {calls:.2f}")


if __name__ == "__main__":
    main()
