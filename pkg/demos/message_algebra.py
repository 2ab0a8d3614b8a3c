"""Message algebra on the smallest interesting graph.

Two binary sources feed a four-state product space, which drives one
three-symbol visible variable.  We push messages around by hand, then let
``propagate`` do the same thing and compare.
"""
import numpy as np

from dica import DicaModel, Evidence, marginalizer, propagate
from dica.messages import backward_through, combine, forward_through, posterior

np.set_printoptions(precision=4, suppress=True)


def main():
    sizes = (2, 2)
    priors = (np.array([0.7, 0.3]), np.array([0.4, 0.6]))
    # rows are product states (s1, s2) = 00, 01, 10, 11
    P = np.array([[0.8, 0.1, 0.1],
                  [0.1, 0.8, 0.1],
                  [0.1, 0.1, 0.8],
                  [0.3, 0.3, 0.4]])
    model = DicaModel(sizes, (3,), priors, (P,))

    print("marginalizer for S1:\n", marginalizer(0, sizes))
    print("marginalizer for S2:\n", marginalizer(1, sizes))

    # by hand: sources forward into the product space, combine at the diverter
    into_product = [forward_through(model.marginalizers[i], priors[i]) for i in range(2)]
    f_product = combine(into_product)
    print("product-space forward:", f_product)
    print("visible forward (prior predictive):", forward_through(P, f_product))

    # observe X = 2 and send the evidence back up to S1
    b_product = backward_through(P, np.array([0.0, 0.0, 1.0]))
    toward_s1 = combine([into_product[1], b_product])
    b_s1 = backward_through(model.marginalizers[0], toward_s1)
    print("posterior of S1 given X=2, by hand:", posterior(priors[0], b_s1))

    state = propagate(model, Evidence.hard([2]))
    print("posterior of S1 given X=2, propagate:", state.source_posteriors()[0])
    print("posterior of S2 given X=2, propagate:", state.source_posteriors()[1])


if __name__ == "__main__":
    main()
