"""Versioned text persistence for trained models.

Layout::

    MLTM 1
    # tool=mltm <version>
    # seed=<seed>
    # config <key>=<value> ...
    dims C=.. W=.. T=.. K=.. variant=..
    hyper eta=.. alpha_sum=.. beta_w=.. beta_c=.. gamma_sum=.. T=..
    labels <n>          then n lines  id<TAB>string
    vocab <n>           then n lines  id<TAB>string
    phi <rows>          then rows     row<TAB>col:prob col:prob ...
    phi_prime <k> <rows>  (once per stored set)
    end

Probabilities are written with 17 significant digits, which round-trips
IEEE doubles exactly.
"""

from __future__ import annotations

from typing import Iterator, TextIO

import numpy as np

from . import __version__
from .corpus import Dictionary
from .errors import ModelFormatError
from .model import Hyperparams, TrainedModel, VARIANTS

MAGIC = "MLTM 1"
_HYPER_FIELDS = ("eta", "alpha_sum", "beta_w", "beta_c", "gamma_sum", "T")


def header_lines(seed: int | None, config: dict | None) -> list[str]:
    """Comment header shared by every artifact the tool writes."""
    lines = [f"# tool=mltm {__version__}", f"# seed={seed if seed is not None else 'NA'}"]
    if config:
        lines.append("# config " + " ".join(f"{k}={v}" for k, v in sorted(config.items())))
    return lines


def _fmt(x: float) -> str:
    return "%.17g" % x


def _write_matrix(out: TextIO, m: np.ndarray) -> None:
    for r, row in enumerate(m):
        cols = np.flatnonzero(row)
        out.write(f"{r}\t" + " ".join(f"{c}:{_fmt(row[c])}" for c in cols) + "\n")


def write_model(model: TrainedModel, out: TextIO, seed: int | None = None, config: dict | None = None) -> None:
    out.write(MAGIC + "\n")
    for line in header_lines(seed, config):
        out.write(line + "\n")
    out.write(f"dims C={model.C} W={model.W} T={model.T} K={model.K} variant={model.variant}\n")
    h = model.hyper
    out.write("hyper " + " ".join(
        f"{f}={getattr(h, f)}" if f == "T" else f"{f}={_fmt(getattr(h, f))}" for f in _HYPER_FIELDS) + "\n")
    for name, d in (("labels", model.label_dict), ("vocab", model.vocab)):
        out.write(f"{name} {len(d)}\n")
        for i, s in enumerate(d):
            out.write(f"{i}\t{s}\n")
    out.write(f"phi {model.C}\n")
    _write_matrix(out, model.phi)
    for k, pp in enumerate(model.phi_prime_sets):
        out.write(f"phi_prime {k} {pp.shape[0]}\n")
        _write_matrix(out, pp)
    out.write("end\n")


def save_model(model: TrainedModel, path, seed: int | None = None, config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        write_model(model, f, seed, config)


class _Lines:
    def __init__(self, stream: TextIO):
        self._it: Iterator[str] = iter(stream)
        self.no = 0

    def next(self, what: str, skip_comments: bool = True) -> str:
        for line in self._it:
            self.no += 1
            line = line.rstrip("\n")
            if not (skip_comments and line.startswith("#")):
                return line
        raise ModelFormatError(f"truncated model file: expected {what} after line {self.no}")

    def fail(self, msg: str) -> ModelFormatError:
        return ModelFormatError(f"line {self.no}: {msg}")


def _keyvals(line: str, tag: str, lines: _Lines) -> dict[str, str]:
    parts = line.split()
    if not parts or parts[0] != tag:
        raise lines.fail(f"expected '{tag}' record")
    try:
        return dict(p.split("=", 1) for p in parts[1:])
    except ValueError:
        raise lines.fail(f"malformed '{tag}' record") from None


def _section(lines: _Lines, tag: str) -> list[str]:
    parts = lines.next(tag).split()
    if len(parts) < 2 or parts[0] != tag or not all(p.isdigit() for p in parts[1:]):
        raise lines.fail(f"expected '{tag}' section")
    return parts[1:]


def _read_dict(lines: _Lines, tag: str) -> Dictionary:
    n = int(_section(lines, tag)[0])
    d = Dictionary()
    for i in range(n):
        line = lines.next(f"{tag} entry {i}")
        idx, _, s = line.partition("\t")
        if idx != str(i):
            raise lines.fail(f"{tag} entry out of order")
        d.add(s)
    return d


def _read_matrix(lines: _Lines, n_rows: int, n_cols: int, what: str) -> np.ndarray:
    m = np.zeros((n_rows, n_cols))
    for r in range(n_rows):
        line = lines.next(f"{what} row {r}")
        rid, _, body = line.partition("\t")
        if rid != str(r):
            raise lines.fail(f"{what} row {r} missing")
        try:
            for item in body.split():
                c, p = item.split(":")
                m[r, int(c)] = float(p)
        except (ValueError, IndexError):
            raise lines.fail(f"malformed {what} row") from None
    return m


def read_model(stream: TextIO) -> TrainedModel:
    """Parse a model file and validate it (row sums, shapes, variant)."""
    lines = _Lines(stream)
    first = lines.next("magic line", skip_comments=False)
    if first != MAGIC:
        raise ModelFormatError(f"unsupported model format {first!r}; expected {MAGIC!r}")
    dims = _keyvals(lines.next("dims"), "dims", lines)
    hyp = _keyvals(lines.next("hyper"), "hyper", lines)
    try:
        C, W, T, K = (int(dims[k]) for k in ("C", "W", "T", "K"))
        variant = dims["variant"]
        hyper = Hyperparams(**{f: int(hyp[f]) if f == "T" else float(hyp[f]) for f in _HYPER_FIELDS})
    except (KeyError, ValueError) as e:
        raise ModelFormatError(f"bad dims/hyper record: {e}") from None
    if variant not in VARIANTS:
        raise ModelFormatError(f"unknown variant {variant!r}")
    labels = _read_dict(lines, "labels")
    vocab = _read_dict(lines, "vocab")
    if len(labels) != C or len(vocab) != W:
        raise ModelFormatError("dictionary sizes disagree with dims")
    if int(_section(lines, "phi")[0]) != C:
        raise lines.fail("phi row count disagrees with dims")
    phi = _read_matrix(lines, C, W, "phi")
    sets = []
    for k in range(K):
        hdr = _section(lines, "phi_prime")
        if hdr != [str(k), str(T)]:
            raise lines.fail(f"expected phi_prime {k} {T}")
        sets.append(_read_matrix(lines, T, C, f"phi_prime[{k}]"))
    if lines.next("end marker") != "end":
        raise lines.fail("expected 'end'")
    model = TrainedModel(phi, sets, variant, hyper, vocab, labels)
    try:
        model.validate()
    except ValueError as e:
        raise ModelFormatError(str(e)) from None
    return model


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as f:
        return read_model(f)
