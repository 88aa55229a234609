import copy
import logging

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from mltm.corpus import Corpus
from mltm.errors import DataError
from mltm.model import Hyperparams, estimate_phi
from mltm.synth import GenParams, generate_corpus
from mltm.train import (
    LabelWordSampler,
    SamplingSchedule,
    TopicLabelSampler,
    _draw,
    gibbs_step_labeltoken,
    topic_label_weights,
    train_label_word,
    train_model,
    train_topic_label,
    word_label_weights,
)

from conftest import corpus_from


def _probs(w):
    w = np.asarray(w, dtype=float)
    return w / w.sum()


def test_word_weights_hand_example():
    # W=1: the word-sum normaliser cancels
    w = word_label_weights([4, 0], [4, 0], 1, [1, 1], [0, 0], 1.0)
    assert _probs(w) == pytest.approx([0.5, 0.5])


def test_word_weights_symmetry():
    w = word_label_weights([2, 2], [5, 5], 10, [3, 3], [25, 25], 0.01)
    assert _probs(w) == pytest.approx([0.5, 0.5])


def test_topic_weights_hand_example():
    w = topic_label_weights([3, 0], [3, 0], 1, [1, 0], 1.0, 1.0)
    assert w == pytest.approx([2.0, 1.0])
    assert _probs(w) == pytest.approx([2 / 3, 1 / 3])


def test_topic_weights_symmetry():
    assert _probs(topic_label_weights([2, 2], [6, 6], 3, [1, 1], 0.1, 0.5)) == pytest.approx([0.5, 0.5])


def test_draw_boundaries():
    w = np.array([1.0, 0.0, 3.0])
    assert _draw(w, 0.0) == 0
    assert _draw(w, 0.25) == 2  # first index whose running total exceeds u * total
    assert _draw(w, 0.9999) == 2


def test_single_label_document_is_deterministic():
    c = corpus_from("d\tonly\ta:2 b:1\n")
    s = LabelWordSampler(c, Hyperparams(), seed=3)
    for _ in range(5):
        s.sweep()
        assert set(s.token_labels()) == {0}


def test_single_topic_label_token():
    c = corpus_from("d\tx,y\ta:1\n")
    s = TopicLabelSampler(c, Hyperparams(T=1, gamma_sum=0.1), seed=0)
    s.sweep()
    assert s.zp.tolist() == [0, 0]


def _corpus(seed=0, D=30, C=5, W=40, T=2):
    return generate_corpus(GenParams(D=D, C=C, W=W, T=T, words_per_doc=("poisson", 12),
                                     labels_per_doc=("poisson", 3), seed=seed)).corpus


def test_compiled_word_sweep_matches_reference_steps():
    corpus = _corpus(1)
    hyper = Hyperparams(eta=50, beta_w=0.05)
    fast = LabelWordSampler(corpus, hyper, seed=7)
    ref = copy.deepcopy(fast)
    for _ in range(3):
        fast.sweep()
        u = ref.rng.random(len(ref.words))
        for i in range(len(ref.words)):
            d = ref.doc_of_token[i]
            prior = np.zeros(corpus.C)
            labs = corpus.docs[d].labels
            prior[list(labs)] = hyper.eta / len(labs)
            ref.step(i, prior, u[i])
        assert np.array_equal(fast.z, ref.z)
        assert np.array_equal(fast.nwc, ref.nwc)
        assert np.array_equal(fast.ncd, ref.ncd)


def test_compiled_topic_sweep_matches_reference_steps():
    corpus = _corpus(2)
    hyper = Hyperparams(T=3, beta_c=0.2, gamma_sum=0.3)
    fast = TopicLabelSampler(corpus, hyper, seed=4)
    ref = copy.deepcopy(fast)
    for _ in range(3):
        fast.sweep()
        u = ref.rng.random(len(ref.labels))
        for i in range(len(ref.labels)):
            gibbs_step_labeltoken(ref, i, hyper.gamma, hyper.beta_c, u[i])
        assert np.array_equal(fast.zp, ref.zp)
        assert np.array_equal(fast.nct, ref.nct)


def test_one_label_per_document_phi_is_count_estimate():
    c = corpus_from("a\tx\tw1:3 w2:1\nb\ty\tw2:2 w3:5\nc\tx\tw3:1\n")
    phi = train_label_word(c, Hyperparams(beta_w=0.01), SamplingSchedule(chains=2, burn_in=3))
    nwc = np.array([[3, 0], [1, 2], [1, 5]])
    assert np.allclose(phi, estimate_phi(nwc, 0.01), atol=1e-15)


def test_same_seed_chains_identical():
    corpus = _corpus(3)
    h = Hyperparams()
    sched = SamplingSchedule(chains=1, burn_in=5)
    a = train_label_word(corpus, h, sched, seed=9, chain_ids=[0])
    b = train_label_word(corpus, h, sched, seed=9, chain_ids=[0, 0])
    assert np.allclose(a, b, rtol=0, atol=1e-15)


def test_chain_order_does_not_matter():
    corpus = _corpus(4)
    h = Hyperparams()
    sched = SamplingSchedule(chains=3, burn_in=5)
    a = train_label_word(corpus, h, sched, seed=2, chain_ids=[0, 1, 2])
    b = train_label_word(corpus, h, sched, seed=2, chain_ids=[2, 0, 1])
    assert np.allclose(a, b, rtol=0, atol=1e-15)


def test_threads_do_not_change_results():
    corpus = _corpus(5)
    h = Hyperparams(T=2, beta_c=0.1, gamma_sum=0.2)
    s = SamplingSchedule(chains=3, burn_in=4)
    m1 = train_model(corpus, "dependency", h, s, s, seed=1, threads=1)
    m3 = train_model(corpus, "dependency", h, s, s, seed=1, threads=3)
    assert np.array_equal(m1.phi, m3.phi)
    assert all(np.array_equal(a, b) for a, b in zip(m1.phi_prime_sets, m3.phi_prime_sets))


def test_training_preconditions():
    with pytest.raises(DataError):
        LabelWordSampler(corpus_from("d\t\tw:1\n"), Hyperparams())
    with pytest.raises(ValueError):
        train_label_word(_corpus(), Hyperparams(alpha_sum=1.0))
    with pytest.raises(ValueError):
        train_model(_corpus(), "prior", Hyperparams(T=2))


def test_single_topic_sets_identical_across_chains():
    corpus = _corpus(6)
    sets = train_topic_label(corpus, Hyperparams(T=1, beta_c=0.5), SamplingSchedule(chains=3, burn_in=2))
    assert len(sets) == 3
    for s in sets[1:]:
        assert np.array_equal(s, sets[0])
    freq = corpus.label_frequencies() + 0.5
    assert np.allclose(sets[0][0], freq / freq.sum())


def test_one_label_docs_phi_prime_rows_normalised():
    c = corpus_from("".join(f"d{i}\tl{i % 4}\tw:1\n" for i in range(20)))
    for pp in train_topic_label(c, Hyperparams(T=3, beta_c=0.1, gamma_sum=0.3), SamplingSchedule(2, 20)):
        assert np.allclose(pp.sum(axis=1), 1, atol=1e-12)


def test_topics_recover_disjoint_supports():
    # two topics over disjoint label halves
    p = GenParams(D=300, C=10, W=5, T=2, labels_per_doc=4, beta_c=1.0, gamma=0.05,
                  topic_leak=1e-6, words_per_doc=1, seed=8)
    s = generate_corpus(p)
    truth = np.array([[c % 2 == t for c in range(10)] for t in range(2)], dtype=float)
    h = Hyperparams(T=2, beta_c=0.01, gamma_sum=0.1)
    for pp in train_topic_label(s.corpus, h, SamplingSchedule(chains=3, burn_in=100), seed=1):
        rows, cols = linear_sum_assignment(-(pp @ truth.T))
        for r, c in zip(rows, cols):
            top = np.argsort(-pp[r])[:3]
            assert truth[c, top].all()


def test_invariants_hold_every_sweep():
    corpus = _corpus(9)
    s = LabelWordSampler(corpus, Hyperparams(), seed=0)
    t = TopicLabelSampler(corpus, Hyperparams(T=3, beta_c=0.1, gamma_sum=0.3), seed=0)
    for _ in range(10):
        s.sweep()
        t.sweep()
        assert s.invariant_violations() == []
        assert t.invariant_violations() == []


def test_progress_log_format(caplog):
    corpus = _corpus(10)
    with caplog.at_level(logging.INFO, logger="mltm.train"):
        train_label_word(corpus, Hyperparams(), SamplingSchedule(chains=1, burn_in=4), log_every=2)
    lines = [r.getMessage() for r in caplog.records]
    assert lines[0].startswith("chain=0 sweep=2 ll=")
    assert len(lines) == 2


def test_schedule_validation_and_sweeps():
    assert SamplingSchedule(1, 10, 3, 2).sample_sweeps() == [10, 13, 16]
    for bad in ((0, 1), (1, 0), (1, 1, 0), (1, 1, 1, -1)):
        with pytest.raises(ValueError):
            SamplingSchedule(*bad)


def test_log_likelihood_improves_from_random_start():
    corpus = _corpus(11, D=60)
    s = LabelWordSampler(corpus, Hyperparams(), seed=1)
    start = s.log_likelihood()
    for _ in range(30):
        s.sweep()
    assert s.log_likelihood() > start


def test_empty_corpus_sampler_runs():
    s = TopicLabelSampler(Corpus(()), Hyperparams(T=2), seed=0)
    s.sweep()
    assert s.invariant_violations() == []
