"""Acceptance suite: one PASS/FAIL line per criterion (see the terminal summary)."""

import itertools
import os
import subprocess
import sys
import time
from math import lgamma

import numpy as np
import pytest

from mltm import _kernels as K
from mltm.corpus import Corpus, Dictionary, Document
from mltm.evaluate import Ranking, evaluate, f1, ranking_metrics, select_cutoff
from mltm.infer import INFER_SCHEDULE, infer_corpus, infer_document_exact
from mltm.model import Hyperparams, TrainedModel, inference_hyperparams, training_hyperparams
from mltm.persist import load_model, save_model
from mltm.synth import GenParams, generate_corpus
from mltm.train import (
    PHI_PRIME_SCHEDULE,
    PHI_SCHEDULE,
    LabelWordSampler,
    SamplingSchedule,
    TopicLabelSampler,
    train_label_word,
    train_model,
    train_topic_label,
)


def _log_dirmult(counts, conc) -> float:
    """Log probability of a sequence with these counts under a Dirichlet-multinomial."""
    counts, conc = np.asarray(counts, float), np.asarray(conc, float)
    out = lgamma(conc.sum()) - lgamma(conc.sum() + counts.sum())
    for n, a in zip(counts, conc):
        out += lgamma(a + n) - lgamma(a)
    return out


# -- 1 --------------------------------------------------------------------------


def test_criterion_1_training_posterior_matches_enumeration(record):
    eta, beta = 1.0, 0.1
    words = np.array([0, 0, 1])  # three tokens over a three-word vocabulary
    corpus = Corpus((Document("d", {0: 2, 1: 1}, (0, 1)),), Dictionary(["a", "b", "c"]), Dictionary(["x", "y"]))
    W, C = 3, 2

    states = list(itertools.product(range(C), repeat=3))
    logp = []
    for z in states:
        ncd = np.bincount(z, minlength=C)
        nwc = np.zeros((W, C))
        for w, c in zip(words, z):
            nwc[w, c] += 1
        lp = _log_dirmult(ncd, np.full(C, eta / C))
        lp += sum(_log_dirmult(nwc[:, c], np.full(W, beta)) for c in range(C))
        logp.append(lp)
    exact = np.exp(np.array(logp) - max(logp))
    exact /= exact.sum()

    t0 = time.perf_counter()
    s = LabelWordSampler(corpus, Hyperparams(eta=eta, beta_w=beta), seed=1)
    n_sweeps = 50_000
    index = {z: k for k, z in enumerate(states)}
    hits = np.zeros(len(states))
    for _ in range(100):
        s.sweep()
    for _ in range(n_sweeps):
        s.sweep()
        hits[index[tuple(int(c) for c in s.token_labels())]] += 1
    elapsed = time.perf_counter() - t0
    emp = hits / n_sweeps

    joint_dev = float(np.max(np.abs(emp - exact)))

    def marg(p):
        return np.array([sum(p[k] for k, z in enumerate(states) if z[i] == 0) for i in range(3)])

    marg_dev = float(np.max(np.abs(marg(emp) - marg(exact))))
    ok = joint_dev <= 0.02 and marg_dev <= 0.02 and elapsed < 30
    record(1, ok, f"joint max dev {joint_dev:.4f}, marginal max dev {marg_dev:.4f} (<= 0.02); {elapsed:.1f}s (< 30s)")
    assert ok


# -- 2 --------------------------------------------------------------------------


def test_criterion_2_exact_inference_matches_enumeration(record):
    phi = np.array([[0.8, 0.2], [0.3, 0.7]])
    phi_prime = np.array([[0.9, 0.1], [0.2, 0.8]])
    eta, alpha_sum, gamma_sum, M = 2.0, 1.0, 1.0, 2
    C, T = 2, 2
    alpha, gamma = alpha_sum / C, gamma_sum / T
    words = [0, 1]
    model = TrainedModel(phi, [phi_prime], "dependency", Hyperparams(T=T))
    hyper = Hyperparams(eta=eta, alpha_sum=alpha_sum, gamma_sum=gamma_sum, T=T)

    theta_exact = np.zeros(C)
    norm = 0.0
    for z in itertools.product(range(C), repeat=len(words)):
        for c in itertools.product(range(C), repeat=M):
            for zp in itertools.product(range(T), repeat=M):
                a = eta * np.bincount(c, minlength=C) / M + alpha
                n = np.bincount(z, minlength=C)
                lp = sum(np.log(phi[zi, w]) for zi, w in zip(z, words))
                lp += _log_dirmult(n, a)
                lp += sum(np.log(phi_prime[t, cj]) for t, cj in zip(zp, c))
                lp += _log_dirmult(np.bincount(zp, minlength=T), np.full(T, gamma))
                p = np.exp(lp)
                theta_exact += p * (n + a) / (len(words) + a.sum())
                norm += p
    theta_exact /= norm

    t0 = time.perf_counter()
    sched = SamplingSchedule(chains=10, burn_in=100, samples_per_chain=10_000, lag=0)
    post = infer_document_exact(Document("d", {0: 1, 1: 1}), model, hyper, M_d=M, schedule=sched, seed=3)
    elapsed = time.perf_counter() - t0
    dev = float(np.max(np.abs(post.theta - theta_exact)))
    ok = dev <= 0.03 and elapsed < 120
    record(2, ok, f"theta max dev {dev:.4f} over 100k samples (<= 0.03); {elapsed:.1f}s (< 120s)")
    assert ok


# -- 3 --------------------------------------------------------------------------


def test_criterion_3_single_topic_dependency_equals_prior(record):
    s = generate_corpus(GenParams(D=300, C=12, W=80, T=3, words_per_doc=("poisson", 25),
                                  labels_per_doc=("poisson", 3), seed=17))
    train = Corpus(s.corpus.docs[:200], s.corpus.vocab, s.corpus.label_dict)
    test = Corpus(s.corpus.docs[200:], s.corpus.vocab, s.corpus.label_dict)
    h = Hyperparams(beta_c=0.1, gamma_sum=0.1, T=1)
    sched = SamplingSchedule(chains=3, burn_in=20)
    prior = train_model(train, "prior", h, sched, sched, seed=4)
    dep = train_model(train, "dependency", h, sched, sched, seed=4)
    ih = inference_hyperparams(T=1)
    expect = ih.eta * prior.phi_prime_sets[0][0] + ih.alpha_sum / prior.C
    worst = 0.0
    res, skipped = infer_corpus(test, dep, ih, SamplingSchedule(4, 10, 3, 1), "fast", seed=5)
    for _, post in res:
        worst = max(worst, float(np.max(np.abs(post.alpha_prior - expect))))
    ok = worst <= 1e-9 and len(res) == 100 and not skipped
    record(3, ok, f"max |alpha' - (eta*phi' + alpha)| = {worst:.2e} over {len(res)} documents (<= 1e-9)")
    assert ok


# -- 4 --------------------------------------------------------------------------


def test_criterion_4_flat_parameter_recovery(record):
    t0 = time.perf_counter()
    s = generate_corpus(GenParams(D=500, C=10, W=50, T=1, variant="flat", seed=2024))
    phi = train_label_word(s.corpus, training_hyperparams(1, 10, 1), PHI_SCHEDULE, seed=1)
    elapsed = time.perf_counter() - t0
    tv = 0.5 * np.abs(phi - s.phi).sum(axis=1).mean()
    baseline = 0.5 * np.abs(np.full(50, 1 / 50) - s.phi).sum(axis=1).mean()
    ratio = tv / baseline
    ok = ratio <= 0.2 and elapsed < 120
    record(4, ok, f"mean row TV {tv:.4f} vs uniform {baseline:.4f}, ratio {ratio:.3f} (<= 0.2); "
                  f"{elapsed:.1f}s (< 120s)")
    assert ok


# -- 5 --------------------------------------------------------------------------


def _brute_force_auc(scores, rel):
    """Fraction of (relevant, irrelevant) pairs where the relevant item ranks first
    (higher score, or equal score and smaller id)."""
    good = total = 0
    for i in np.flatnonzero(rel):
        for j in np.flatnonzero(~rel):
            total += 1
            good += scores[i] > scores[j] or (scores[i] == scores[j] and i < j)
    return good / total


def test_criterion_5_metric_oracles(record):
    rng = np.random.default_rng(55)
    auc_fail = loss_fail = bep_fail = 0
    for _ in range(1000):
        C = int(rng.integers(2, 21))
        # coarse integer scores force plenty of ties
        scores = rng.integers(0, 6, C).astype(float) if rng.random() < 0.5 else rng.random(C)
        rel = rng.random(C) < rng.uniform(0.1, 0.9)
        if rel.all() or not rel.any():
            rel[0], rel[-1] = True, False
        r = Ranking.from_scores(scores, np.flatnonzero(rel))
        m = ranking_metrics(r)
        auc_fail += m.auc_roc != _brute_force_auc(scores, rel)
        loss_fail += abs(m.rank_loss - 100 * (1 - m.auc_roc)) > 1e-9
        k, _ = select_cutoff(r, "bep")
        n_pos = int(rel.sum())

        def prefix_f1(j):
            tp = int(r.relevant[:j].sum())
            return f1(tp, j - tp, n_pos - tp)

        bep_fail += any(prefix_f1(j) > prefix_f1(k) for j in range(C + 1))
    ok = auc_fail == loss_fail == bep_fail == 0
    record(5, ok, f"1000 instances: auc mismatches {auc_fail}, rank_loss mismatches {loss_fail}, "
                  f"BEP dominated {bep_fail}")
    assert ok


# -- 6 --------------------------------------------------------------------------


def _ordering_run(seed):
    D, D_test, C, T = 1200, 200, 50, 5
    p = GenParams(D=D + D_test, C=C, W=400, T=T, variant="dependency", words_per_doc=("poisson", 25),
                  labels_per_doc=("poisson", 14), beta_w=0.3, beta_c=0.3, gamma=0.1, zipf_exponent=1.0,
                  topic_leak=0.02, seed=seed)
    c = generate_corpus(p).corpus
    train = Corpus(c.docs[:D], c.vocab, c.label_dict)
    test = Corpus(c.docs[D:], c.vocab, c.label_dict)
    card = float(np.mean([len(d.labels) for d in train.docs]))
    n_label_tokens = sum(len(d.labels) for d in train.docs)
    phi = train_label_word(train, training_hyperparams(n_label_tokens, C, 1), PHI_SCHEDULE, seed, threads=4)
    Y = test.label_matrix(C)
    auc = {}
    for variant, TT in (("flat", 1), ("prior", 1), ("dependency", T)):
        h = training_hyperparams(n_label_tokens, C, TT)
        sets = [] if variant == "flat" else train_topic_label(train, h, PHI_PRIME_SCHEDULE, seed, threads=4)
        model = TrainedModel(phi, sets, variant, h, train.vocab, train.label_dict)
        # test-time prior weights scaled to the short documents (defaults assume ~150 words)
        ih = inference_hyperparams(T=TT, eta=25, alpha_sum=5, gamma_sum=25)
        res, _ = infer_corpus(test, model, ih, INFER_SCHEDULE, "fast", seed, threads=4)
        S = np.array([post.scores for _, post in res])
        auc[variant] = evaluate(S, Y, "document", cutoffs=()).macro["auc_roc"]
    return card, auc


@pytest.mark.slow
def test_criterion_6_model_ordering(record):
    t0 = time.perf_counter()
    details, ok = [], True
    for seed in (0, 1, 2):
        card, auc = _ordering_run(seed)
        good = card >= 4 and auc["dependency"] >= auc["prior"] >= auc["flat"] \
            and auc["dependency"] - auc["flat"] >= 0.03
        ok &= good
        details.append(f"seed {seed}: card {card:.2f} flat {auc['flat']:.4f} prior {auc['prior']:.4f} "
                       f"dep {auc['dependency']:.4f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    record(6, ok, "; ".join(details) + f"; {elapsed:.0f}s (< 600s)")
    assert ok


# -- 7 --------------------------------------------------------------------------


def _min_time(fn, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _per_sweep(corpus):
    s = LabelWordSampler(corpus, Hyperparams(), seed=0)
    s.sweep()  # compile and warm caches
    n = 10
    return _min_time(lambda: [s.sweep() for _ in range(n)]) / n


def _per_cycle(N, C, T, rng):
    phi_tok = rng.dirichlet(np.ones(C), size=N)
    phi_prime = rng.dirichlet(np.ones(C), size=T)
    const = np.zeros(C)
    args = (phi_tok, phi_prime, const, True, 150.0, 0.6, 150.0 / T)

    def timed(burn_in):
        u = rng.random(K.fast_chain_uniforms(N, True, burn_in, 1, 0))
        return _min_time(lambda: K.fast_chain(*args, burn_in, 1, 0, u))

    short, long = 10, 60
    # the difference of two chain lengths removes the set-up cost
    return (timed(long) - timed(short)) / (long - short)


@pytest.mark.slow
def test_criterion_7_complexity(record):
    s = generate_corpus(GenParams(D=2000, C=40, W=500, T=4, words_per_doc=("poisson", 100),
                                  labels_per_doc=("poisson", 4), seed=7))
    half = Corpus(s.corpus.docs[:1000], s.corpus.vocab, s.corpus.label_dict)
    full = s.corpus
    t_half, t_full = _per_sweep(half), _per_sweep(full)
    token_ratio = full.n_tokens / half.n_tokens
    sweep_ratio = t_full / t_half

    rng = np.random.default_rng(0)
    t1, t100, t200 = (_per_cycle(2000, 50, T, rng) for T in (1, 100, 200))
    share = t100 - t1
    growth = t200 - t100
    ok_a = sweep_ratio <= 2.5
    ok_b = growth <= 2.5 * share
    record(7, ok_a and ok_b,
           f"(a) tokens x{token_ratio:.2f}: sweep {t_half * 1e3:.2f}ms -> {t_full * 1e3:.2f}ms, ratio {sweep_ratio:.2f} "
           f"(<= 2.5); (b) cycle T=1/100/200: {t1 * 1e3:.3f}/{t100 * 1e3:.3f}/{t200 * 1e3:.3f}ms, "
           f"T 100->200 adds {growth * 1e3:.3f}ms vs share {share * 1e3:.3f}ms (<= 2.5x)")
    assert ok_a and ok_b


# -- 8 --------------------------------------------------------------------------


def _cli(*args, cwd):
    env = dict(os.environ, MLTM_THREADS="2")
    r = subprocess.run([sys.executable, "-m", "mltm.cli", *map(str, args)], cwd=cwd, env=env,
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    return r


def _pipeline(d):
    d.mkdir()
    _cli("synth", "--out", "data", "--seed", 11, "--synth-docs", 150, "--synth-test-docs", 40, "--synth-labels", 10,
         "--synth-words", 80, "--synth-topics", 3, "--synth-doc-length", "poisson:30",
         "--synth-label-tokens", "poisson:5", cwd=d)
    _cli("train", "--corpus", "data/train.txt", "--model", "model.txt", "--seed", 11, "--T", 3,
         "--phi-chains", 3, "--phi-burn-in", 20, "--phi-prime-chains", 3, "--phi-prime-burn-in", 40, cwd=d)
    _cli("infer", "--model", "model.txt", "--test", "data/test.txt", "--out", "scores.txt", "--seed", 11,
         "--infer-chains", 6, "--infer-burn-in", 10, "--infer-samples", 3, "--infer-lag", 1, cwd=d)
    _cli("eval", "--scores", "scores.txt", "--test", "data/test.txt", "--train", "data/train.txt",
         "--out", "report.tsv", "--seed", 11, cwd=d)


def test_criterion_8_determinism_and_roundtrip(record, tmp_path):
    a, b = tmp_path / "run_a", tmp_path / "run_b"
    _pipeline(a)
    _pipeline(b)
    same = {f: (a / f).read_bytes() == (b / f).read_bytes() for f in ("model.txt", "scores.txt", "report.tsv")}

    model = load_model(a / "model.txt")
    save_model(model, tmp_path / "again.txt")
    again = load_model(tmp_path / "again.txt")
    exact = np.array_equal(model.phi, again.phi) and all(
        np.array_equal(x, y) for x, y in zip(model.phi_prime_sets, again.phi_prime_sets))
    ok = all(same.values()) and exact
    record(8, ok, f"byte-identical {same}; load(save(model)) bit-exact: {exact}")
    assert ok


# -- 9 --------------------------------------------------------------------------


def test_criterion_9_invariants_every_sweep(record):
    s = generate_corpus(GenParams(D=150, C=15, W=100, T=3, labels_per_doc=("poisson", 4), seed=9))
    words = LabelWordSampler(s.corpus, Hyperparams(), seed=1)
    topics = TopicLabelSampler(s.corpus, Hyperparams(T=3, beta_c=0.1, gamma_sum=0.3), seed=1)
    violations = []
    for sweep in range(50):
        words.sweep()
        topics.sweep()
        violations += [f"phi sweep {sweep}: {v}" for v in words.invariant_violations()]
        violations += [f"phi' sweep {sweep}: {v}" for v in topics.invariant_violations()]
    ok = not violations
    record(9, ok, f"50 sweeps x 2 samplers, {len(violations)} violations" + (f": {violations[:3]}" if violations else ""))
    assert ok
