"""Generation, encoding, completion and correction on a 4x4 toy world.

The model stores four 4x4 patterns, one per joint source state.  Pixels are
drawn as '#' (on) and '.' (off); soft values are shown as digits 0-9.
"""
import itertools

import numpy as np

from dica import DicaModel, Evidence, complete, correct, encode, generate, mean_image

PATTERNS = np.array([
    [1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],  # top bar
    [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0],  # left bar
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1],  # bottom bar
    [0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1],  # right bar
])


def show(values, title):
    print(title)
    for row in np.asarray(values, dtype=float).reshape(4, 4):
        print("  " + " ".join("#" if v >= 0.9 else "." if v <= 0.1 else str(int(v * 10)) for v in row))


def toy_model(eps=0.05):
    cpts = []
    for j in range(16):
        on = PATTERNS[:, j].astype(float)
        p1 = eps + (1 - 2 * eps) * on
        cpts.append(np.column_stack([1 - p1, p1]))
    return DicaModel((2, 2), (2,) * 16, (np.full(2, 0.5), np.full(2, 0.5)), tuple(cpts))


def main():
    model = toy_model()

    for config in itertools.product(range(2), repeat=2):
        show(mean_image(generate(model, list(config))), f"generate {config}")

    code = encode(model, Evidence.hard(PATTERNS[2]))
    print("code of the bottom bar:", [np.round(c, 4).tolist() for c in code])

    # half the pixels of the left bar are hidden
    observed = np.zeros(16, dtype=bool)
    observed[[0, 1, 2, 3, 4, 5, 6, 7]] = True
    result = complete(model, Evidence.partial(PATTERNS[1], observed))
    show(np.where(observed, PATTERNS[1], 0.5), "left bar, bottom half erased (5 = unknown)")
    show(mean_image(result.estimate), "completed")

    noisy = PATTERNS[3].copy()
    noisy[[0, 6]] ^= 1
    show(noisy, "right bar with two flipped pixels")
    show(mean_image(correct(model, Evidence.hard(noisy))), "corrected")


if __name__ == "__main__":
    main()
