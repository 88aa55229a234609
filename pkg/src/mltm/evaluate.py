"""Ranking and binary evaluation for multi-label predictions.

Rankings can be document-pivoted (rank the labels of each document) or
label-pivoted (rank the documents for each label). Ties in score are broken
by ascending item id so every ranking is a strict order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

PIVOTS = ("document", "label")
CUTOFFS = ("proportional", "calibrated", "bep")
RANK_METRICS = ("auc_roc", "auc_pr", "avg_prec", "one_error", "is_error", "margin", "rank_loss")


@dataclass(frozen=True)
class Ranking:
    order: np.ndarray  # item ids, best first
    relevant: np.ndarray  # boolean flag per position in `order`

    @classmethod
    def from_scores(cls, scores, relevant_items) -> "Ranking":
        scores = np.asarray(scores, dtype=float)
        ids = np.arange(len(scores))
        order = np.lexsort((ids, -scores))
        rel = np.zeros(len(scores), dtype=bool)
        rel[np.asarray(list(relevant_items), dtype=np.int64)] = True
        return cls(order, rel[order])

    @property
    def n_relevant(self) -> int:
        return int(self.relevant.sum())

    def __len__(self) -> int:
        return len(self.order)


@dataclass(frozen=True)
class RankMetrics:
    auc_roc: float
    auc_pr: float
    avg_prec: float
    one_error: float
    is_error: float
    margin: float
    rank_loss: float

    def as_dict(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in RANK_METRICS}


def pr_points(relevant: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(TP, FP) after each prefix of the ranking."""
    rel = np.asarray(relevant, dtype=np.int64)
    tp = np.cumsum(rel)
    return tp, np.arange(1, len(rel) + 1) - tp


def auc_pr_davis_goadrich(tp: np.ndarray, fp: np.ndarray, n_pos: int) -> float:
    """Area under the PR curve through achievable (TP, FP) points.

    Between consecutive points A and B, intermediate points are placed at
    every integer TP with FP interpolated linearly in TP; the curve is
    extended flat to recall 0 from the first point with TP > 0.
    """
    rec, prec = [], []
    prev_tp, prev_fp = 0, 0
    for t, f in zip(tp, fp):
        t, f = int(t), int(f)
        if t > prev_tp:
            skew = (f - prev_fp) / (t - prev_tp)
            for x in range(1, t - prev_tp + 1):
                ti = prev_tp + x
                fi = prev_fp + skew * x
                rec.append(ti / n_pos)
                prec.append(ti / (ti + fi))
        prev_tp, prev_fp = t, f
    if not rec:
        return 0.0
    rec = np.array([0.0] + rec)
    prec = np.array([prec[0]] + prec)
    return float(np.sum(np.diff(rec) * (prec[1:] + prec[:-1]) / 2.0))


def ranking_metrics(ranking: Ranking, exclusive_avg_prec: bool = False) -> RankMetrics:
    """All seven ranking metrics for one item.

    The error metrics (one-error, is-error, ranking loss) are on a 0-100 scale.
    With `exclusive_avg_prec`, precision for a relevant item counts only the
    items ranked strictly above it (1.0 when there are none).
    """
    rel = np.asarray(ranking.relevant, dtype=bool)
    n = len(rel)
    n_pos = int(rel.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ranking metrics need at least one relevant and one irrelevant item")
    # pairs (relevant, irrelevant) ordered correctly: irrelevant items below each relevant one
    neg_below = n_neg - np.cumsum(~rel)
    correct = int(neg_below[rel].sum())
    auc = correct / (n_pos * n_neg)

    ranks = np.flatnonzero(rel) + 1  # 1-based ranks of relevant items
    hits = np.arange(1, n_pos + 1)
    if exclusive_avg_prec:
        above = ranks - 1
        ap = float(np.mean(np.where(above > 0, (hits - 1) / np.maximum(above, 1), 1.0)))
    else:
        ap = float(np.mean(hits / ranks))

    tp, fp = pr_points(rel)
    lowest_rel = int(ranks[-1])
    highest_irr = int(np.flatnonzero(~rel)[0]) + 1
    margin = max(1, lowest_rel - highest_irr + 1)
    return RankMetrics(
        auc_roc=auc,
        auc_pr=auc_pr_davis_goadrich(tp, fp, n_pos),
        avg_prec=ap,
        one_error=0.0 if rel[0] else 100.0,
        is_error=0.0 if margin == 1 else 100.0,
        margin=float(margin),
        rank_loss=100.0 * (1.0 - auc),
    )


@dataclass(frozen=True)
class CutoffInfo:
    """Training statistics needed by the proportional cutoff."""

    D_train: int
    D_test: int
    label_train_freq: np.ndarray  # documents per label in training
    doc_train_sizes: np.ndarray  # labels per training document

    @classmethod
    def from_corpora(cls, train, D_test: int) -> "CutoffInfo":
        return cls(train.D, D_test, train.label_frequencies(),
                   np.array([len(d.labels) for d in train.docs]))


def f1(tp: float, fp: float, fn: float) -> float:
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else float(2 * tp / denom)


def select_cutoff(
    ranking: Ranking,
    method: str,
    train_info: CutoffInfo | None = None,
    pivot: str = "document",
    item: int | None = None,
) -> tuple[int, np.ndarray]:
    """Number of top-ranked items to call positive and the prediction vector.

    The prediction vector is aligned with ``ranking.order``. Proportional
    cutoffs use training frequencies: ceil(D_test / D_train * N_train) for a
    label, the median training label count (rounded up) for a document.
    BEP picks the prefix with the highest F1, the shortest one on ties.
    """
    n = len(ranking)
    rel = np.asarray(ranking.relevant, dtype=bool)
    if method == "proportional":
        if train_info is None:
            raise ValueError("proportional cutoff needs training statistics")
        if pivot == "label":
            if item is None:
                raise ValueError("label-pivoted proportional cutoff needs the label id")
            k = math.ceil(train_info.D_test / train_info.D_train * train_info.label_train_freq[item])
        else:
            k = math.ceil(float(np.median(train_info.doc_train_sizes)))
    elif method == "calibrated":
        k = int(rel.sum())
    elif method == "bep":
        tp = np.cumsum(rel)
        sizes = np.arange(1, n + 1)
        f = 2 * tp / (sizes + rel.sum())
        k = int(np.argmax(f)) + 1 if n else 0
        if n and f[k - 1] == 0:
            k = 0
    else:
        raise ValueError(f"unknown cutoff method {method!r}")
    k = int(min(max(k, 0), n))
    pred = np.zeros(n, dtype=bool)
    pred[:k] = True
    return k, pred


def f1_scores(predictions: np.ndarray, truth: np.ndarray, pivot: str = "document") -> tuple[float, float]:
    """(micro F1, macro F1). Rows are documents, columns labels; items are
    rows for the document pivot and columns for the label pivot."""
    P = np.asarray(predictions, dtype=bool)
    Y = np.asarray(truth, dtype=bool)
    if P.shape != Y.shape:
        raise ValueError(f"shape mismatch {P.shape} vs {Y.shape}")
    axis = 1 if pivot == "document" else 0
    tp = (P & Y).sum(axis=axis)
    fp = (P & ~Y).sum(axis=axis)
    fn = (~P & Y).sum(axis=axis)
    per_item = [f1(a, b, c) for a, b, c in zip(tp, fp, fn)]
    macro = float(np.mean(per_item)) if per_item else 0.0
    return f1(tp.sum(), fp.sum(), fn.sum()), macro


@dataclass
class EvalReport:
    pivot: str
    per_item: dict[int, RankMetrics]
    macro: dict[str, float]
    f1: dict[str, tuple[float, float]]  # cutoff -> (micro, macro)
    n_items: int
    n_evaluated: int
    excluded: list[int] = field(default_factory=list)

    def rows(self) -> list[tuple[str, str, str, float]]:
        out = [(m, self.pivot, "-", self.macro[m]) for m in RANK_METRICS if m in self.macro]
        for cut, (micro, macro) in self.f1.items():
            out.append(("micro_f1", self.pivot, cut, micro))
            out.append(("macro_f1", self.pivot, cut, macro))
        return out


def evaluate(
    scores: np.ndarray,
    truth: np.ndarray,
    pivot: str = "document",
    cutoffs=CUTOFFS,
    evaluated_labels=None,
    train_info: CutoffInfo | None = None,
    exclusive_avg_prec: bool = False,
) -> EvalReport:
    """Rank, score and threshold a D x C score matrix against binary truth.

    Only `evaluated_labels` (all columns by default) take part. Items whose
    truth is all-positive or all-negative over the evaluated targets are
    excluded from every average and listed in ``report.excluded``.
    """
    if pivot not in PIVOTS:
        raise ValueError(f"unknown pivot {pivot!r}")
    S = np.asarray(scores, dtype=float)
    Y = np.asarray(truth, dtype=bool)
    if S.shape != Y.shape:
        raise ValueError(f"score matrix {S.shape} and truth {Y.shape} differ in shape")
    labels = np.arange(S.shape[1]) if evaluated_labels is None else np.asarray(evaluated_labels, dtype=np.int64)
    if len(labels) == 0:
        raise DataError("no labels to evaluate")
    S, Y = S[:, labels], Y[:, labels]
    if pivot == "label":
        S, Y = S.T, Y.T
        item_ids = labels
    else:
        item_ids = np.arange(S.shape[0])

    per_item, excluded = {}, []
    preds = {c: np.zeros_like(Y) for c in cutoffs}
    kept_rows = []
    for r in range(S.shape[0]):
        n_pos = int(Y[r].sum())
        if n_pos == 0 or n_pos == Y.shape[1]:
            excluded.append(int(item_ids[r]))
            continue
        kept_rows.append(r)
        ranking = Ranking.from_scores(S[r], np.flatnonzero(Y[r]))
        per_item[int(item_ids[r])] = ranking_metrics(ranking, exclusive_avg_prec)
        for c in cutoffs:
            _, pred = select_cutoff(ranking, c, train_info, pivot, int(item_ids[r]))
            preds[c][r, ranking.order] = pred
    if not per_item:
        raise DataError("every item has degenerate ground truth; nothing to evaluate")
    macro = {m: float(np.mean([getattr(v, m) for v in per_item.values()])) for m in RANK_METRICS}
    kept = np.array(kept_rows)
    f1s = {c: f1_scores(preds[c][kept], Y[kept], "document") for c in cutoffs}
    return EvalReport(pivot, per_item, macro, f1s, S.shape[0], len(per_item), excluded)
