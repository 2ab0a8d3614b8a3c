"""Learn the 4x4 toy world back from samples.

Samples come from four bar patterns chosen uniformly.  A fresh model with
random tables is trained by EM; afterwards the four source configurations
should regenerate the four bars, in some order.
"""
import itertools

import numpy as np

from dica import Evidence, TrainConfig, build, generate, mean_image, train
from toy_inference import PATTERNS, show


def main(seed=0):
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, 4, 200)
    data = [Evidence.hard(PATTERNS[k]) for k in picks]

    model = build(2, [2, 2], 16, [2] * 16, seed=seed)
    model, report = train(model, data, TrainConfig(epochs=10, seed=seed))
    print(report.to_csv())

    found = set()
    for config in itertools.product(range(2), repeat=2):
        image = mean_image(generate(model, list(config)))
        show(image, f"source configuration {config}")
        found.add(tuple((image >= 0.5).astype(int)))
    print("all four patterns recovered:", found == {tuple(p) for p in PATTERNS})
    print("learned priors:", [np.round(p, 3).tolist() for p in model.priors])


if __name__ == "__main__":
    main()
