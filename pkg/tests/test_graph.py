import itertools
from dataclasses import replace

import numpy as np
import pytest

from conftest import PATTERNS, pattern_model
from dica import (CapacityError, ContradictoryEvidence, DicaModel, DimensionError, Evidence,
                  drop_impossible,
                  MissingLabelBlock, build, classify, combine, complete, correct, encode, generate,
                  marginalizer, mean_image, product_coords, product_index, propagate, prototype)
from dica.messages import backward_through, forward_through, uniform
from oracle import brute_marginalizer, enumerate_joint, random_model_and_evidence


def test_marginalizer_examples():
    np.testing.assert_array_equal(marginalizer(0, [3]), np.eye(3))
    np.testing.assert_array_equal(marginalizer(0, [2, 2]), [[0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5]])
    np.testing.assert_array_equal(marginalizer(1, [2, 2]), [[0.5, 0, 0.5, 0], [0, 0.5, 0, 0.5]])
    row = marginalizer(1, [2, 2, 2])[0]
    assert set(np.flatnonzero(row)) == {0, 1, 4, 5}
    assert np.all(row[[0, 1, 4, 5]] == 0.25)


@pytest.mark.parametrize("sizes", [[2], [3, 2], [2, 3, 2], [3, 3, 3], [2, 2, 2, 2]])
def test_marginalizer_support_and_summation(sizes):
    rng = np.random.default_rng(0)
    S = int(np.prod(sizes))
    for i in range(len(sizes)):
        P = marginalizer(i, sizes)
        np.testing.assert_array_equal(P, brute_marginalizer(i, sizes))
        assert np.allclose(P.sum(axis=1), 1, atol=1e-12)
        for k in range(sizes[i]):
            support = {s for s in range(S) if product_coords(s, sizes)[i] == k}
            assert set(np.flatnonzero(P[k])) == support
        # backward through a marginalizer is exact marginalization
        d = rng.random(S)
        direct = np.array([sum(d[s] for s in range(S) if product_coords(s, sizes)[i] == k)
                           for k in range(sizes[i])])
        np.testing.assert_allclose(backward_through(P, d / d.sum()), direct / direct.sum(), atol=1e-14)


def test_marginalizer_bad_index():
    with pytest.raises(DimensionError):
        marginalizer(2, [2, 2])


def test_product_index():
    assert product_index([0, 0, 0], [2, 3, 4]) == 0
    assert product_index([1, 0], [2, 2]) == 2
    assert product_index([1, 2], [2, 3]) == 5
    with pytest.raises(DimensionError):
        product_index([2, 0], [2, 2])
    for s in range(24):
        assert product_index(product_coords(s, [2, 3, 4]), [2, 3, 4]) == s


def test_build():
    m = build(2, [2, 2], 1, [2], seed=3)
    np.testing.assert_array_equal(m.marginalizers[0], marginalizer(0, [2, 2]))
    np.testing.assert_array_equal(m.marginalizers[1], marginalizer(1, [2, 2]))
    m2 = build(2, [2, 2], 1, [2], seed=3)
    for a, b in zip(m.visible_cpts + m.priors, m2.visible_cpts + m2.priors):
        np.testing.assert_array_equal(a, b)
    assert all(np.all(P > 0) for P in m.visible_cpts)
    assert build(8, [2] * 8, 784, [2] * 784, seed=0).product_size == 256
    with pytest.raises(CapacityError):
        build(21, [2] * 21, 1, [2])


def test_model_is_immutable(toy):
    with pytest.raises(ValueError):
        toy.priors[0][0] = 1.0
    with pytest.raises(Exception):
        toy.priors = ()


def test_model_rejects_bad_tables(toy):
    bad = list(toy.visible_cpts)
    bad[0] = np.array([[0.5, 0.4]] * 4)
    with pytest.raises(ValueError):
        replace(toy, visible_cpts=tuple(bad))


def random_model(rng, **kw):
    sizes, vsizes, priors, cpts, label, ev, label_ev = random_model_and_evidence(rng, **kw)
    model = DicaModel(tuple(sizes), tuple(vsizes), tuple(priors), tuple(cpts), label)
    return model, ev, label_ev


def check_against_oracle(model, ev, label_ev, source_forwards=None):
    state = propagate(model, Evidence(ev, label_ev), source_forwards)
    priors = model.priors if source_forwards is None else source_forwards
    ref = enumerate_joint(priors, model.visible_cpts, ev, model.label_cpt, label_ev)
    err = 0.0
    for a, b in zip(state.source_posteriors(), ref["source_posterior"]):
        err = max(err, np.abs(a - b).max())
    for a, b in zip(state.source_backward, ref["source_backward"]):
        err = max(err, np.abs(a - b).max())
    for a, b in zip(state.visible_posteriors(), ref["visible_posterior"]):
        err = max(err, np.abs(a - b).max())
    for a, b in zip(state.visible_forward, ref["visible_forward"]):
        err = max(err, np.abs(a - b).max())
    if model.has_label:
        err = max(err, np.abs(state.label_posterior() - ref["label_posterior"]).max())
        err = max(err, np.abs(state.label_forward - ref["label_forward"]).max())
    return err


@pytest.mark.parametrize("seed", range(40))
def test_propagate_matches_enumeration(seed):
    model, ev, label_ev = random_model(np.random.default_rng(seed))
    assert check_against_oracle(model, ev, label_ev) <= 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_propagate_with_injected_sources(seed):
    rng = np.random.default_rng(100 + seed)
    model, ev, label_ev = random_model(rng)
    f = [rng.dirichlet(np.ones(n)) for n in model.source_sizes]
    assert check_against_oracle(model, ev, label_ev, f) <= 1e-10


def test_no_evidence_forward_is_prior_predictive():
    model = build(2, [2, 3], 3, [2, 3, 2], seed=1)
    model = replace(model, priors=(uniform(2), uniform(3)))
    state = propagate(model)
    for f, P in zip(state.visible_forward, model.visible_cpts):
        np.testing.assert_allclose(f, forward_through(P, uniform(6)), atol=1e-14)


def test_single_observation_posterior_is_delta():
    model = build(2, [2, 2], 3, [3, 3, 3], seed=2)
    state = propagate(model, Evidence([2, None, None]))
    np.testing.assert_allclose(state.visible_posteriors()[0], [0, 0, 1], atol=1e-15)


def test_diverter_messages_match_combine():
    model, ev, _ = random_model(np.random.default_rng(7), with_label=False)
    state = propagate(model, Evidence(ev))
    inward = state.diverter_in
    for t in range(len(inward)):
        others = [inward[k] for k in range(len(inward)) if k != t]
        np.testing.assert_allclose(state.diverter_out[t], combine(others), atol=1e-13)


def test_propagate_idempotent():
    model, ev, label_ev = random_model(np.random.default_rng(11), with_label=True)
    a = propagate(model, Evidence(ev, label_ev))
    b = propagate(model, Evidence(ev, label_ev))
    np.testing.assert_array_equal(a.diverter_out, b.diverter_out)
    for x, y in zip(a.visible_forward + a.source_backward, b.visible_forward + b.source_backward):
        np.testing.assert_array_equal(x, y)


def test_contradictory_evidence(toy):
    # pixel 0 and 1 always agree in every stored pattern
    with pytest.raises(ContradictoryEvidence):
        propagate(toy, Evidence([0, 1] + [None] * 14))


def test_evidence_shape_errors(toy):
    with pytest.raises(DimensionError):
        propagate(toy, Evidence([0] * 3))
    with pytest.raises(DimensionError):
        propagate(toy, Evidence([2] + [None] * 15))
    with pytest.raises(DimensionError):
        propagate(toy, Evidence([np.array([0.2, 0.3, 0.5])] + [None] * 15))
    with pytest.raises(MissingLabelBlock):
        propagate(toy, Evidence.empty(16, label=1))


def argmax_image(msgs):
    return (mean_image(msgs) >= 0.5).astype(int)


def test_generate_deterministic(toy):
    for config in itertools.product(range(2), repeat=2):
        fwd = generate(toy, list(config))
        np.testing.assert_array_equal(mean_image(fwd), PATTERNS[product_index(config, [2, 2])])


def test_generate_rows_of_tables():
    model = build(2, [2, 3], 2, [3, 2], seed=4)
    for config in itertools.product(range(2), range(3)):
        fwd = generate(model, list(config))
        for f, P in zip(fwd, model.visible_cpts):
            np.testing.assert_allclose(f, P[product_index(config, [2, 3])], atol=1e-14)


def test_generate_soft_sources():
    model = build(2, [2, 2], 3, [2, 2, 2], seed=5)
    fwd = generate(model, [uniform(2), uniform(2)])
    for f, P in zip(fwd, model.visible_cpts):
        np.testing.assert_allclose(f, P.mean(axis=0), atol=1e-14)


def test_generate_bad_config(toy):
    with pytest.raises(DimensionError):
        generate(toy, [0])
    with pytest.raises(DimensionError):
        generate(toy, [0, 2])


@pytest.mark.parametrize("M", [1, 2, 3])
def test_generate_encode_round_trip(M):
    rng = np.random.default_rng(M)
    S = 2 ** M
    patterns = rng.integers(0, 2, size=(S, 12))
    while len({tuple(p) for p in patterns}) < S:
        patterns = rng.integers(0, 2, size=(S, 12))
    cpts = tuple(np.stack([1 - patterns[:, j], patterns[:, j]], axis=1).astype(float) for j in range(12))
    model = DicaModel((2,) * M, (2,) * 12, tuple(uniform(2) for _ in range(M)), cpts)
    for config in itertools.product(range(2), repeat=M):
        image = argmax_image(generate(model, list(config)))
        code = [int(np.argmax(p)) for p in encode(model, Evidence.hard(image))]
        assert tuple(code) == config


def test_encode_uninformative_source():
    # tables depend only on the first source
    rng = np.random.default_rng(9)
    rows = rng.dirichlet(np.ones(2), size=(2, 5))
    cpts = tuple(np.repeat(rows[:, j], 3, axis=0) for j in range(5))
    priors = (np.array([0.3, 0.7]), np.array([0.2, 0.5, 0.3]))
    model = DicaModel((2, 3), (2,) * 5, priors, cpts)
    post = encode(model, Evidence.hard(rng.integers(0, 2, 5)))
    np.testing.assert_allclose(post[1], priors[1], atol=1e-14)


def test_encode_requires_full_evidence(toy):
    with pytest.raises(ValueError):
        encode(toy, Evidence.partial(PATTERNS[0], np.arange(16) < 8))


def test_complete_fills_erasures(toy):
    # pixels 2..7 distinguish all four patterns
    observed = np.zeros(16, dtype=bool)
    observed[2:8] = True
    for p in PATTERNS:
        result = complete(toy, Evidence.partial(p, observed))
        np.testing.assert_array_equal(mean_image(result.estimate), p)
        np.testing.assert_array_equal(mean_image(result.forward)[~observed], p[~observed])
        np.testing.assert_array_equal(result.observed, observed)


def test_complete_all_observed_reduces_to_encode(toy):
    ev = Evidence.hard(PATTERNS[2])
    result = complete(toy, ev)
    for a, b in zip(result.sources, encode(toy, ev)):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(mean_image(result.estimate), PATTERNS[2])


def test_complete_needs_observation(toy):
    with pytest.raises(ValueError):
        complete(toy, Evidence.empty(16))


def test_correct_single_flip():
    model = pattern_model(eps=0.05)
    for p in PATTERNS:
        np.testing.assert_array_equal(argmax_image(correct(model, Evidence.hard(p))), p)
        for j in range(16):
            noisy = p.copy()
            noisy[j] ^= 1
            np.testing.assert_array_equal(argmax_image(correct(model, Evidence.hard(noisy))), p)


def test_correct_returns_forward_not_posterior():
    model = pattern_model(eps=0.05)
    noisy = PATTERNS[0].copy()
    noisy[3] ^= 1
    state = propagate(model, Evidence.hard(noisy))
    out = correct(model, Evidence.hard(noisy))
    for a, b in zip(out, state.visible_forward):
        np.testing.assert_array_equal(a, b)
    # the posterior would echo the corrupted pixel
    assert np.argmax(state.visible_posteriors()[3]) == noisy[3]


def test_correct_accepts_soft_evidence():
    model = pattern_model(eps=0.05)
    soft = [np.array([0.8, 0.2]) if x == 0 else np.array([0.2, 0.8]) for x in PATTERNS[1]]
    np.testing.assert_array_equal(argmax_image(correct(model, Evidence(soft))), PATTERNS[1])


def two_class_model():
    label = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    return pattern_model(label_cpt=label)


def test_classify_toy():
    model = two_class_model()
    for s, p in enumerate(PATTERNS):
        post, sources = classify(model, Evidence.hard(p))
        assert np.argmax(post) == s // 2
        assert [int(np.argmax(q)) for q in sources] == list(product_coords(s, [2, 2]))


def test_classify_uniform_label_table(toy):
    model = replace(toy, label_cpt=np.full((4, 3), 1 / 3))
    for p in PATTERNS:
        post, _ = classify(model, Evidence.hard(p))
        np.testing.assert_allclose(post, uniform(3), atol=1e-15)


def test_classify_needs_label_block(toy):
    with pytest.raises(MissingLabelBlock):
        classify(toy, Evidence.hard(PATTERNS[0]))
    with pytest.raises(MissingLabelBlock):
        prototype(toy, 0)


def test_prototypes_toy():
    model = pattern_model(label_cpt=np.eye(4))
    for c in range(4):
        fwd, sources = prototype(model, c)
        np.testing.assert_array_equal(argmax_image(fwd), PATTERNS[c])
        assert [int(np.argmax(q)) for q in sources] == list(product_coords(c, [2, 2]))
    # two-class table: prototype is the mixture of that class's patterns
    fwd, _ = prototype(two_class_model(), 1)
    np.testing.assert_allclose(mean_image(fwd), PATTERNS[2:].mean(axis=0), atol=1e-15)


def test_prototypes_uniform_label_table(toy):
    model = replace(toy, label_cpt=np.full((4, 10), 0.1))
    first = mean_image(prototype(model, 0)[0])
    for c in range(1, 10):
        np.testing.assert_array_equal(mean_image(prototype(model, c)[0]), first)
    with pytest.raises(DimensionError):
        prototype(model, 10)


def test_mean_image():
    np.testing.assert_array_equal(mean_image([np.array([0.0, 1.0])] * 3), [1, 1, 1])
    np.testing.assert_array_equal(mean_image([uniform(2)] * 2), [0.5, 0.5])
    np.testing.assert_array_equal(mean_image([np.array([0.3, 0.7]), np.array([1.0, 0.0])]), [0.7, 0.0])
    with pytest.raises(DimensionError):
        mean_image([uniform(3)])


def test_drop_impossible():
    # pixel 0 can never be 1 under any state
    cpts = [np.array([[1.0, 0.0]] * 4)] + [np.array([[0.5, 0.5]] * 4)] * 2
    model = DicaModel((2, 2), (2, 2, 2), (uniform(2), uniform(2)), tuple(cpts))
    ev = Evidence.hard([1, 0, 1], label=None)
    with pytest.raises(ContradictoryEvidence):
        propagate(model, ev)
    relaxed, dropped = drop_impossible(model, ev)
    np.testing.assert_array_equal(dropped, [True, False, False])
    np.testing.assert_array_equal(relaxed.observed, [False, True, True])
    propagate(model, relaxed)
    same, none = drop_impossible(model, Evidence.hard([0, 1, 1]))
    assert not none.any()
