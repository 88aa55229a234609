"""mltm command line: ingest, stats, train, infer, eval, synth.

Settings come from built-in defaults, then an optional ``--config`` file of
``key=value`` lines, then command-line flags (flags win). Every setting is a
field of RunConfig; its flag is ``--`` plus the field name with dashes.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .corpus import (
    POLICIES,
    Corpus,
    Document,
    align_test_labels,
    corpus_stats,
    prune_vocabulary,
    read_corpus,
    write_corpus,
    write_dictionary,
)
from .errors import ConfigError, DataError, MLTMError
from .evaluate import CUTOFFS, CutoffInfo, evaluate
from .infer import infer_corpus
from .model import VARIANTS, Hyperparams, default_topics, inference_hyperparams
from .persist import header_lines, load_model, save_model
from .synth import GenParams, generate_corpus
from .train import SamplingSchedule, train_model

log = logging.getLogger("mltm")

PATH_FIELDS = ("corpus", "test", "train", "model", "scores", "out", "plot_dir", "stopwords")


@dataclass
class RunConfig:
    """All settings. ``None`` means "derive from the data" where noted."""

    variant: str = "dependency"  # flat | prior | dependency
    seed: int = 0
    threads: int = 0  # 0: MLTM_THREADS or 1
    log_every: int = 10  # sweeps between progress lines, 0 silences them
    # ingest
    format: str = "counts"  # counts | tokens
    min_count: int = 20
    stopwords: str = ""
    # training
    T: Optional[int] = None  # None: C, or 200 when C > 500; prior forces 1
    train_eta: float = 50.0
    beta_w: float = 0.01
    beta_c: Optional[float] = None  # None: label tokens / (10 T C)
    train_gamma_sum: Optional[float] = None  # None: 0.1 T
    phi_chains: int = 8
    phi_burn_in: int = 100
    phi_prime_chains: int = 10
    phi_prime_burn_in: int = 500
    # inference
    test_eta: float = 150.0
    test_alpha_sum: float = 30.0
    test_gamma_sum: float = 150.0
    infer_chains: int = 60
    infer_burn_in: int = 50
    infer_samples: int = 15
    infer_lag: int = 5
    mode: str = "fast"  # fast | exact
    label_tokens: int = 100  # M_d for exact mode
    top_k: int = 0  # 0 writes all labels
    # evaluation
    pivot: str = "both"  # document | label | both
    cutoffs: str = "proportional,calibrated,bep"
    label_policy: str = "restrict-to-intersection"
    exclusive_avg_prec: bool = False
    # synthesis
    synth_docs: int = 1000
    synth_test_docs: int = 200
    synth_labels: int = 50
    synth_words: int = 1000
    synth_topics: int = 5
    synth_doc_length: str = "poisson:50"
    synth_label_tokens: str = "poisson:10"
    synth_beta_w: float = 0.1
    synth_beta_c: float = 0.1
    synth_gamma: float = 0.1
    synth_eta: float = 50.0
    synth_zipf: float = 1.0
    synth_topic_leak: float = 1.0
    # paths
    corpus: str = ""
    test: str = ""
    train: str = ""
    model: str = ""
    scores: str = ""
    out: str = ""
    plot_dir: str = ""

    def echo(self, keys=None) -> dict[str, str]:
        """Settings for artifact headers; paths are reduced to base names."""
        out = {}
        for f in fields(self):
            if keys is not None and f.name not in keys:
                continue
            v = getattr(self, f.name)
            if f.name in PATH_FIELDS:
                v = Path(v).name if v else ""
            out[f.name] = "auto" if v is None else v
        return out

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get("MLTM_THREADS", "")
        try:
            return max(int(env), 1) if env else 1
        except ValueError:
            raise ConfigError(f"MLTM_THREADS must be an integer, got {env!r}") from None


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _convert(name: str, raw: str):
    f = {f.name: f for f in fields(RunConfig)}[name]
    kind = f.type.replace("Optional[", "").rstrip("]")
    if raw == "auto" and f.type.startswith("Optional"):
        return None
    try:
        if kind == "bool":
            return _BOOL[raw.lower()]
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"setting {name}: cannot parse {raw!r} as {kind}") from None
    return raw


def read_config_file(path) -> dict:
    known = {f.name for f in fields(RunConfig)}
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from None
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{path}:{no}: expected key=value")
        if key not in known:
            raise ConfigError(f"{path}:{no}: unknown setting {key!r}")
        out[key] = _convert(key, val.strip())
    return out


def _validate(cfg: RunConfig) -> None:
    choices = {
        "variant": VARIANTS,
        "format": ("counts", "tokens"),
        "mode": ("fast", "exact"),
        "pivot": ("document", "label", "both"),
        "label_policy": POLICIES,
    }
    for key, allowed in choices.items():
        if getattr(cfg, key) not in allowed:
            raise ConfigError(f"{key} must be one of {', '.join(allowed)}; got {getattr(cfg, key)!r}")
    for c in _cutoffs(cfg):
        if c not in CUTOFFS:
            raise ConfigError(f"unknown cutoff {c!r}")
    if cfg.variant == "prior" and cfg.T not in (None, 1):
        raise ConfigError("prior models have exactly one topic; leave T unset or set T=1")


def _cutoffs(cfg: RunConfig) -> list[str]:
    return [c.strip() for c in cfg.cutoffs.split(",") if c.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mltm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"mltm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "read a corpus, prune the vocabulary, write counts format and dictionaries",
        "stats": "label statistics of a corpus (TSV key/value)",
        "train": "train a model and write it to --model",
        "infer": "score the labels of --test documents with --model",
        "eval": "evaluate --scores against the labels of --test",
        "synth": "sample a synthetic corpus with ground truth into --out",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", help="key=value settings file")
        for f in fields(RunConfig):
            default = f.default
            sp.add_argument(
                "--" + f.name.replace("_", "-"),
                dest=f.name,
                default=argparse.SUPPRESS,
                metavar=f.name.upper(),
                help=f"(default: {'auto' if default is None else default})",
            )
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(ns, "config", None):
        values.update(read_config_file(ns.config))
    for f in fields(RunConfig):
        if hasattr(ns, f.name):
            values[f.name] = _convert(f.name, getattr(ns, f.name))
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if not getattr(cfg, n)]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _open_out(cfg: RunConfig):
    if not cfg.out:
        return sys.stdout, False
    Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
    return open(cfg.out, "w", encoding="utf-8", newline="\n"), True


def _write_header(out, cfg: RunConfig, keys=None) -> None:
    for line in header_lines(cfg.seed, cfg.echo(keys)):
        out.write(line + "\n")


_TRAIN_KEYS = ("variant", "seed", "T", "train_eta", "beta_w", "beta_c", "train_gamma_sum", "phi_chains",
               "phi_burn_in", "phi_prime_chains", "phi_prime_burn_in", "corpus")
_INFER_KEYS = ("seed", "test_eta", "test_alpha_sum", "test_gamma_sum", "infer_chains", "infer_burn_in",
               "infer_samples", "infer_lag", "mode", "label_tokens", "top_k", "model", "test")
_EVAL_KEYS = ("seed", "pivot", "cutoffs", "label_policy", "exclusive_avg_prec", "scores", "test", "train")


# -- subcommands -----------------------------------------------------------


def cmd_ingest(cfg: RunConfig) -> int:
    _require(cfg, "corpus", "out")
    corpus = read_corpus(cfg.corpus, cfg.format)
    stop = ()
    if cfg.stopwords:
        stop = Path(cfg.stopwords).read_text(encoding="utf-8").split()
    pruned = prune_vocabulary(corpus, cfg.min_count, stop)
    write_corpus(pruned, cfg.out)
    write_dictionary(pruned.vocab, cfg.out + ".vocab.tsv")
    write_dictionary(pruned.label_dict, cfg.out + ".labels.tsv")
    log.info("ingested %d documents, %d words, %d labels", pruned.D, pruned.W, pruned.C)
    return 0


def cmd_stats(cfg: RunConfig) -> int:
    _require(cfg, "corpus")
    stats = corpus_stats(read_corpus(cfg.corpus, cfg.format))
    out, close = _open_out(cfg)
    try:
        _write_header(out, cfg, ("seed", "corpus", "format"))
        for k, v in stats.rows():
            out.write(f"{k}\t{v}\n")
    finally:
        if close:
            out.close()
    if cfg.plot_dir:
        from .plotting import plot_label_frequencies

        plot_label_frequencies(stats, cfg.plot_dir)
    return 0


def training_config(cfg: RunConfig, corpus: Corpus) -> tuple[Hyperparams, SamplingSchedule, SamplingSchedule]:
    C = corpus.C
    T = 1 if cfg.variant in ("prior", "flat") else (cfg.T or default_topics(C))
    n_label_tokens = sum(len(d.labels) for d in corpus.docs)
    beta_c = cfg.beta_c if cfg.beta_c is not None else max(n_label_tokens, 1) / (10.0 * T * C)
    gamma_sum = cfg.train_gamma_sum if cfg.train_gamma_sum is not None else 0.1 * T
    try:
        hyper = Hyperparams(eta=cfg.train_eta, alpha_sum=0.0, beta_w=cfg.beta_w, beta_c=beta_c,
                            gamma_sum=gamma_sum, T=T)
        phi_s = SamplingSchedule(chains=cfg.phi_chains, burn_in=cfg.phi_burn_in)
        pp_s = SamplingSchedule(chains=cfg.phi_prime_chains, burn_in=cfg.phi_prime_burn_in)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return hyper, phi_s, pp_s


def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "corpus", "model")
    corpus = read_corpus(cfg.corpus, cfg.format)
    for k, v in corpus_stats(corpus).rows():
        if not k.startswith("label_freq_hist."):
            print(f"{k}\t{v}", file=sys.stderr)
    hyper, phi_s, pp_s = training_config(cfg, corpus)
    t0 = time.perf_counter()
    model = train_model(corpus, cfg.variant, hyper, phi_s, pp_s, cfg.seed, cfg.resolved_threads(), cfg.log_every)
    print(f"train_seconds\t{time.perf_counter() - t0:.3f}", file=sys.stderr)
    Path(cfg.model).parent.mkdir(parents=True, exist_ok=True)
    save_model(model, cfg.model, cfg.seed, cfg.echo(_TRAIN_KEYS))
    return 0


def map_to_model(test: Corpus, model) -> Corpus:
    """Re-key test documents to the model vocabulary by word string."""
    docs, hits = [], 0
    for doc in test.docs:
        counts = {}
        for w, n in doc.word_counts.items():
            mw = model.vocab.id(test.vocab.string(w))
            if mw is not None:
                counts[mw] = counts.get(mw, 0) + n
        hits += len(counts)
        docs.append(Document(doc.id, counts, ()))
    if test.n_tokens and not hits:
        raise DataError("dictionary mismatch: no test word occurs in the model vocabulary")
    return Corpus(tuple(docs), model.vocab, model.label_dict)


def cmd_infer(cfg: RunConfig) -> int:
    _require(cfg, "model", "test", "out")
    model = load_model(cfg.model)
    test = map_to_model(read_corpus(cfg.test, cfg.format), model)
    try:
        hyper = inference_hyperparams(T=max(model.T, 1), eta=cfg.test_eta, alpha_sum=cfg.test_alpha_sum,
                                      gamma_sum=cfg.test_gamma_sum)
        schedule = SamplingSchedule(cfg.infer_chains, cfg.infer_burn_in, cfg.infer_samples, cfg.infer_lag)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    t0 = time.perf_counter()
    results, skipped = infer_corpus(test, model, hyper, schedule, cfg.mode, cfg.seed,
                                    cfg.resolved_threads(), cfg.label_tokens)
    log.info("inferred %d documents in %.3fs", len(results), time.perf_counter() - t0)
    out, close = _open_out(cfg)
    try:
        _write_header(out, cfg, _INFER_KEYS)
        for doc_id, post in results:
            order = np.lexsort((np.arange(model.C), -post.scores))
            if cfg.top_k > 0:
                order = order[: cfg.top_k]
            out.write(doc_id + "\t" + " ".join(
                f"{model.label_dict.string(c)}:{float(post.scores[c])!r}" for c in order) + "\n")
    finally:
        if close:
            out.close()
    with open(cfg.out + ".skipped", "w", encoding="utf-8", newline="\n") as f:
        _write_header(f, cfg, _INFER_KEYS)
        for doc_id in skipped:
            f.write(doc_id + "\n")
    return 0


def read_scores(path) -> list[tuple[str, dict[str, float]]]:
    """Parse an infer output file into (doc_id, {label: score})."""
    rows = []
    with open(path, encoding="utf-8") as f:
        for no, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            doc_id, _, body = line.partition("\t")
            scores = {}
            try:
                for item in body.split():
                    lab, _, val = item.rpartition(":")
                    scores[lab] = float(val)
            except ValueError:
                raise DataError(f"{path}:{no}: malformed score entry") from None
            rows.append((doc_id, scores))
    return rows


def score_matrix(rows, aligned: Corpus) -> tuple[np.ndarray, np.ndarray]:
    """Score and truth matrices (documents x aligned labels). Labels missing
    from a row (top-k output) score -inf."""
    by_id = {d.id: d for d in aligned.docs}
    S = np.full((len(rows), aligned.C), -np.inf)
    Y = np.zeros((len(rows), aligned.C), dtype=bool)
    for r, (doc_id, scores) in enumerate(rows):
        doc = by_id.get(doc_id)
        if doc is None:
            raise DataError(f"scored document {doc_id!r} is not in the test corpus")
        Y[r, list(doc.labels)] = True
        for lab, v in scores.items():
            c = aligned.label_dict.id(lab)
            if c is not None:
                S[r, c] = v
    return S, Y


def cmd_eval(cfg: RunConfig) -> int:
    _require(cfg, "scores", "test", "train")
    train = read_corpus(cfg.train, cfg.format)
    test = read_corpus(cfg.test, cfg.format)
    aligned, evaluated = align_test_labels(train, test, cfg.label_policy)
    rows = read_scores(cfg.scores)
    S, Y = score_matrix(rows, aligned)
    info = CutoffInfo.from_corpora(train, len(rows))
    pivots = ("document", "label") if cfg.pivot == "both" else (cfg.pivot,)
    reports = [
        evaluate(S, Y, p, _cutoffs(cfg), evaluated, info, cfg.exclusive_avg_prec) for p in pivots
    ]
    out, close = _open_out(cfg)
    try:
        _write_header(out, cfg, _EVAL_KEYS)
        out.write("metric\tpivot\tcutoff\tvalue\n")
        for rep in reports:
            for metric, pivot, cut, value in rep.rows():
                out.write(f"{metric}\t{pivot}\t{cut}\t{float(value)!r}\n")
    finally:
        if close:
            out.close()
    unscored = len(test.docs) - len(rows)
    summary = [f"[eval] mltm {__version__} seed={cfg.seed}",
               f"documents_scored={len(rows)} documents_unscored={unscored} labels_evaluated={len(evaluated)}"]
    for rep in reports:
        summary.append(f"[{rep.pivot}] items={rep.n_items} evaluated={rep.n_evaluated} "
                       f"excluded={len(rep.excluded)}")
        summary.append("  " + " ".join(f"{k}={v:.4f}" for k, v in rep.macro.items()))
        for cut, (micro, macro) in rep.f1.items():
            summary.append(f"  f1[{cut}] micro={micro:.4f} macro={macro:.4f}")
    print("\n".join(summary), file=sys.stderr if not cfg.out else sys.stdout)
    if cfg.plot_dir:
        from .plotting import plot_eval

        for rep in reports:
            plot_eval(rep, cfg.plot_dir)
    return 0


def _length(spec: str):
    kind, _, val = spec.partition(":")
    try:
        if not val:
            return int(kind)
        if kind != "poisson":
            raise ValueError
        return ("poisson", float(val))
    except ValueError:
        raise ConfigError(f"length must be N or poisson:MEAN, got {spec!r}") from None


def cmd_synth(cfg: RunConfig) -> int:
    _require(cfg, "out")
    T = 1 if cfg.variant == "prior" else cfg.synth_topics
    try:
        params = GenParams(
            D=cfg.synth_docs + cfg.synth_test_docs, C=cfg.synth_labels, W=cfg.synth_words, T=T,
            variant=cfg.variant, words_per_doc=_length(cfg.synth_doc_length),
            labels_per_doc=_length(cfg.synth_label_tokens), beta_w=cfg.synth_beta_w,
            beta_c=cfg.synth_beta_c, gamma=cfg.synth_gamma, eta=cfg.synth_eta,
            zipf_exponent=cfg.synth_zipf, topic_leak=cfg.synth_topic_leak, seed=cfg.seed,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None
    sc = generate_corpus(params)
    c = sc.corpus
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    n = cfg.synth_docs
    write_corpus(Corpus(c.docs[:n], c.vocab, c.label_dict), out / "train.txt")
    write_corpus(Corpus(c.docs[n:], c.vocab, c.label_dict), out / "test.txt")
    keys = [f.name for f in fields(RunConfig) if f.name.startswith("synth_")] + ["variant", "seed"]

    def matrix(name, m, row_names):
        with open(out / name, "w", encoding="utf-8", newline="\n") as f:
            _write_header(f, cfg, keys)
            for r, row in zip(row_names, m):
                f.write(r + "\t" + " ".join(repr(float(x)) for x in row) + "\n")

    matrix("phi.tsv", sc.phi, list(c.label_dict))
    if sc.phi_prime is not None:
        matrix("phi_prime.tsv", sc.phi_prime, [f"t{t}" for t in range(params.T)])
    if sc.theta_prime is not None:
        matrix("theta_prime.tsv", sc.theta_prime, [d.id for d in c.docs])
    log.info("wrote %d training and %d test documents to %s", n, cfg.synth_test_docs, out)
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        return COMMANDS[ns.command](cfg)
    except MLTMError as e:
        print(f"mltm {ns.command}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"mltm {ns.command}: {e}", file=sys.stderr)
        return DataError.exit_code
    except ValueError as e:
        print(f"mltm {ns.command}: {e}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
