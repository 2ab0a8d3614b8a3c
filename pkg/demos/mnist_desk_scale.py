"""Desk-scale MNIST run: 500 binarized digits, eight binary sources.

Writes PGM images to ``demo_output/`` (override with the first argument):

* ``generated_XXX.pgm``  the 256 source configurations, decoded
* ``completion_*``       held-out digits with half their pixels erased
* ``prototype_C.pgm``    class prototypes from a supervised model

Takes about twenty seconds on one core.
"""
import itertools
import sys
from pathlib import Path

import numpy as np

from dica import (ContradictoryEvidence, Evidence, TrainConfig, build, classify, complete,
                  drop_impossible, generate, mean_image, prototype, train)
from dica.dataio import load_mnist, split_subset, write_pgm

DATA = Path(__file__).resolve().parent.parent / "data"
M = 8


def main(out="demo_output"):
    out = Path(out)
    out.mkdir(exist_ok=True)
    ds = load_mnist(DATA / "mnist5k-images-idx3-ubyte.gz", DATA / "mnist5k-labels-idx1-ubyte.gz")
    train_set, held_out = split_subset(ds, 500, seed=0)
    H, W = train_set.height, train_set.width
    N = H * W

    model = build(M, [2] * M, N, [2] * N, seed=0)
    model, report = train(model, train_set.evidence(), TrainConfig(epochs=1, inner_cycles=5))
    print(report.to_csv())
    print("priors P(S_i = 1):", np.round([p[1] for p in model.priors], 3))

    for k, config in enumerate(itertools.product(range(2), repeat=M)):
        write_pgm(mean_image(generate(model, list(config))), W, H, out / f"generated_{k:03d}.pgm")

    rng = np.random.default_rng(0)
    hits = total = 0
    for t, x in enumerate(held_out.pixels()[:20]):
        keep = np.ones(N, dtype=bool)
        keep[rng.choice(N, N // 2, replace=False)] = False
        ev = Evidence.partial(x, keep)
        try:
            result = complete(model, ev)
        except ContradictoryEvidence:
            # a pixel value the model never saw; treat it as missing
            result = complete(model, drop_impossible(model, ev)[0])
        guess = mean_image(result.estimate)
        hits += int(np.sum((guess >= 0.5)[~keep] == x[~keep]))
        total += int((~keep).sum())
        write_pgm(np.where(keep, x, 0.5), W, H, out / f"completion_{t:02d}_input.pgm")
        write_pgm(guess, W, H, out / f"completion_{t:02d}_output.pgm")
    print(f"erased pixels recovered: {hits / total:.3f}")

    labelled = build(M, [2] * M, N, [2] * N, with_label=True, seed=0)
    labelled, _ = train(labelled, train_set.evidence(with_labels=True),
                        TrainConfig(epochs=1, inner_cycles=5, supervised=True))
    right = sum(int(np.argmax(classify(labelled, Evidence.hard(x))[0]) == c)
                for x, c in zip(train_set.pixels(), train_set.labels))
    print(f"training-set accuracy: {right / len(train_set):.3f}")
    for c in range(10):
        write_pgm(mean_image(prototype(labelled, c)[0]), W, H, out / f"prototype_{c}.pgm")
    print("images written to", out.resolve())


if __name__ == "__main__":
    main(*sys.argv[1:2])
