"""Average accuracy on the 5-task blob benchmark over a grid of embedding
dimensions and bandwidths."""

import argparse

from gkde.stream import TrainConfig, average_accuracy, evaluate_stream, synth_blobs, train_stream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", default="2,4,8,16,32,64")
    ap.add_argument("--bandwidths", default="0.1,0.5,1,2,10")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    dims = [int(v) for v in args.dims.split(",")]
    hs = [float(v) for v in args.bandwidths.split(",")]

    stream = synth_blobs(5, 2, 16, 8.0, 500, seed=args.seed)
    print("dim\\h," + ",".join(f"{h:g}" for h in hs))
    for d in dims:
        row = []
        for h in hs:
            bank = train_stream(stream.fresh(), TrainConfig(dim=d, bandwidth=h, seed=args.seed))
            row.append(average_accuracy(evaluate_stream(bank, stream).matrix))
        print(f"{d}," + ",".join(f"{a:.3f}" for a in row))


if __name__ == "__main__":
    main()
