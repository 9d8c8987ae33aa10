"""100-task x 2-class stress run: bank growth, runtime and forgetting
as a function of blob separation."""

import argparse
import time

from gkde.stream import TrainConfig, average_accuracy, average_forgetting, evaluate_stream, synth_blobs, train_stream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seps", default="8,16,32")
    ap.add_argument("--tasks", type=int, default=100)
    ap.add_argument("--samples-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("separation,entries,labels,avg_acc,avg_forgetting,seconds")
    for sep in (float(v) for v in args.seps.split(",")):
        t0 = time.perf_counter()
        stream = synth_blobs(args.tasks, 2, 16, sep, args.samples_per_class, seed=args.seed)
        bank = train_stream(stream, TrainConfig(seed=args.seed))
        rep = evaluate_stream(bank, stream)
        print(f"{sep:g},{len(bank)},{len(bank.labels)},{average_accuracy(rep.matrix):.4f},"
              f"{average_forgetting(rep.matrix):.4f},{time.perf_counter() - t0:.1f}")


if __name__ == "__main__":
    main()
