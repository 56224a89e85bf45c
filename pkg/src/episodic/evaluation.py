"""Retrieval metrics for episode lists: recall proxy, precision, MAP@k, nDCG@k.

Predictions are engine reports; gold files list the true episodes of a
corpus with their date, place and participants. Judgments may be given in
the gold file, otherwise they are derived from the alignment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

from .model import TimeSpec
from .text import fold

DEFAULT_K = (1, 3, 5, 10)
W5H_GRADED = ("who", "where", "when")


class EvalError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


class Grade(Enum):
    EXACT = "Exact"
    TOO_BROAD = "TooBroad"
    TOO_NARROW = "TooNarrow"
    PARTIAL = "Partial"
    NOT_RELEVANT = "NotRelevant"

    @property
    def gain(self) -> int:
        return _GAINS[self]

    @classmethod
    def parse(cls, value: str) -> "Grade":
        for g in cls:
            if g.value == value:
                return g
        raise ValueError(f"unknown grade {value!r}")


_GAINS = {
    Grade.EXACT: 5,
    Grade.TOO_BROAD: 4,
    Grade.TOO_NARROW: 3,
    Grade.PARTIAL: 2,
    Grade.NOT_RELEVANT: 1,
}


# ---------------------------------------------------------------------------
# metric kernels
# ---------------------------------------------------------------------------


def average_precision_at_k(relevance: Sequence[int | bool], k: int, n_relevant: int | None = None) -> float:
    """AP@k over a ranked binary relevance list.

    ``n_relevant`` defaults to the number of relevant items in the whole list.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    rel = [1 if r else 0 for r in relevance]
    total = sum(rel) if n_relevant is None else n_relevant
    denom = min(k, total)
    if denom == 0:
        return 0.0
    hits, acc = 0, 0.0
    for i, r in enumerate(rel[:k], 1):
        if r:
            hits += 1
            acc += hits / i
    return acc / denom


def dcg_at_k(gains: Sequence[float], k: int) -> float:
    return sum(g / math.log2(i + 1) for i, g in enumerate(gains[:k], 1))


def ndcg_at_k(gains: Sequence[float], k: int) -> float:
    """Linear-gain nDCG@k; the ideal ranking sorts the same gains descending."""
    if k <= 0:
        raise ValueError("k must be positive")
    ideal = dcg_at_k(sorted(gains, reverse=True), k)
    if ideal == 0:
        return 0.0
    return dcg_at_k(list(gains), k) / ideal


def mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs) if xs else 0.0


# ---------------------------------------------------------------------------
# gold and predictions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoldEpisode:
    id: str
    dates: frozenset[date]
    where_id: str
    where_name: str
    who: frozenset[str]

    @classmethod
    def from_json(cls, raw: dict) -> "GoldEpisode":
        if "date" in raw:
            dates = frozenset({date.fromisoformat(raw["date"])})
        else:
            dates = frozenset(TimeSpec.parse(raw["when"]).local_dates())
        where = raw["where"]
        if isinstance(where, str):
            where = {"id": where, "name": where}
        return cls(str(raw["id"]), dates, where["id"], where.get("name", where["id"]), frozenset(raw.get("who", ())))


@dataclass(frozen=True)
class Judgment:
    binary: bool
    grade: Grade
    w5h: dict[str, Grade] = field(default_factory=dict, hash=False, compare=False)

    @classmethod
    def from_json(cls, raw: dict) -> "Judgment":
        grade = Grade.parse(raw["grade"])
        return cls(
            bool(raw.get("binary", grade is Grade.EXACT)),
            grade,
            {d: Grade.parse(g) for d, g in raw.get("w5h", {}).items()},
        )


@dataclass
class GoldSet:
    episodes: list[GoldEpisode]
    judgments: dict[str, Judgment] = field(default_factory=dict)
    distractors: dict[str, str] = field(default_factory=dict)
    corpus_digest: str | None = None

    @classmethod
    def from_json(cls, raw: dict) -> "GoldSet":
        return cls(
            [GoldEpisode.from_json(e) for e in raw.get("episodes", [])],
            {k: Judgment.from_json(v) for k, v in raw.get("judgments", {}).items()},
            {d["doc_id"]: d["kind"] for d in raw.get("distractors", [])},
            raw.get("corpus_digest"),
        )


@dataclass(frozen=True)
class Prediction:
    episode_id: str
    score: float
    where_ids: frozenset[str]
    where_names: frozenset[str]
    dates: frozenset[date]
    who: frozenset[str]
    records: frozenset[str]

    @classmethod
    def from_json(cls, raw: dict) -> "Prediction":
        w = raw.get("w5h", {})
        when = w.get("when")
        dates = frozenset(TimeSpec.parse(when).local_dates()) if when else frozenset()
        where = w.get("where") or []
        return cls(
            raw["episode_id"],
            float(raw["score"]),
            frozenset(p["id"] for p in where),
            frozenset(fold(p.get("name", "")) for p in where),
            dates,
            frozenset(p["id"] for p in w.get("who", [])),
            frozenset(r for e in raw.get("evidence", []) for r in e.get("records", [e.get("doc_id")])),
        )


def load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise EvalError("UnreadableFile", f"{path}: {exc}") from exc


def load_predictions(raw: dict) -> list[Prediction]:
    preds = [Prediction.from_json(e) for e in raw.get("episodes", [])]
    # stored order is the ranking; fall back to score order if ranks are absent
    ranks = [e.get("rank") for e in raw.get("episodes", [])]
    if any(r is None for r in ranks):
        preds.sort(key=lambda p: (-p.score, p.episode_id))
    return preds


# ---------------------------------------------------------------------------
# alignment and grading
# ---------------------------------------------------------------------------


def same_place(p: Prediction, g: GoldEpisode) -> bool:
    return g.where_id in p.where_ids or fold(g.where_name) in p.where_names


def compatible(p: Prediction, g: GoldEpisode) -> bool:
    return same_place(p, g) and bool(p.dates & g.dates)


@dataclass
class Alignment:
    preds: list[Prediction]
    gold: list[GoldEpisode]
    pairs: dict[int, int]  # prediction index -> gold index

    @property
    def matched_gold(self) -> int:
        return len(self.pairs)

    @property
    def unmatched_gold(self) -> list[GoldEpisode]:
        used = set(self.pairs.values())
        return [g for j, g in enumerate(self.gold) if j not in used]


def match_predictions(preds: list[Prediction], gold: GoldSet | list[GoldEpisode]) -> Alignment:
    """One-to-one alignment, greedy from the highest scoring prediction down."""
    episodes = gold.episodes if isinstance(gold, GoldSet) else gold
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    used: set[int] = set()
    pairs: dict[int, int] = {}
    for i in order:
        for j, g in enumerate(episodes):
            if j not in used and compatible(preds[i], g):
                pairs[i] = j
                used.add(j)
                break
    return Alignment(list(preds), list(episodes), pairs)


def grade_set(pred: frozenset, gold: frozenset) -> Grade:
    if pred == gold:
        return Grade.EXACT
    if not pred or not (pred & gold):
        return Grade.NOT_RELEVANT
    if pred > gold:
        return Grade.TOO_BROAD
    if pred < gold:
        return Grade.TOO_NARROW
    # overlap with both extra and missing values; the extras dominate
    return Grade.TOO_BROAD


def grade_dimensions(p: Prediction, g: GoldEpisode) -> dict[str, Grade]:
    where = Grade.EXACT if same_place(p, g) and len(p.where_ids) == 1 else grade_set(p.where_ids, frozenset({g.where_id}))
    return {"who": grade_set(p.who, g.who), "where": where, "when": grade_set(p.dates, g.dates)}


def derive_judgments(al: Alignment, distractors: dict[str, str]) -> list[Judgment]:
    """Judgments for each prediction when the gold file supplies none.

    Matched predictions are Exact. An unmatched one that still fits a gold
    episode is a fragment of it (TooNarrow). One built on a take-out payment
    is Partial. Anything else is NotRelevant.
    """
    out = []
    for i, p in enumerate(al.preds):
        if i in al.pairs:
            out.append(Judgment(True, Grade.EXACT, grade_dimensions(p, al.gold[al.pairs[i]])))
            continue
        none = {d: Grade.NOT_RELEVANT for d in W5H_GRADED}
        if any(compatible(p, g) for g in al.gold):
            out.append(Judgment(False, Grade.TOO_NARROW, none))
        elif any(distractors.get(r) == "takeout" for r in p.records):
            out.append(Judgment(False, Grade.PARTIAL, none))
        else:
            out.append(Judgment(False, Grade.NOT_RELEVANT, none))
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def recall_proxy(al: Alignment) -> float:
    if not al.gold:
        raise EvalError("EmptyGold", "gold set has no episodes")
    return al.matched_gold / len(al.gold)


def set_precision(al: Alignment) -> float:
    return al.matched_gold / len(al.preds) if al.preds else 0.0


def r_precision(al: Alignment) -> float:
    """Precision over the top ``|gold|`` predictions."""
    r = len(al.gold)
    if r == 0:
        return 0.0
    return sum(1 for i in al.pairs if i < r) / r


@dataclass
class CorpusEval:
    label: str
    n_pred: int
    n_gold: int
    matched: int
    recall: float
    precision: float
    r_precision: float
    map_at: dict[int, float]
    ndcg_at: dict[int, float]
    w5h: dict[str, dict[str, dict[int, float]]]

    def to_json(self) -> dict:
        ks = lambda d: {str(k): v for k, v in d.items()}  # noqa: E731
        return {
            "label": self.label,
            "n_pred": self.n_pred,
            "n_gold": self.n_gold,
            "matched": self.matched,
            "recall_proxy": self.recall,
            "precision": self.precision,
            "r_precision": self.r_precision,
            "map": ks(self.map_at),
            "ndcg": ks(self.ndcg_at),
            "w5h": {d: {m: ks(v) for m, v in ms.items()} for d, ms in self.w5h.items()},
        }


def w5h_dimension_metrics(judgments: list[Judgment], ks: Sequence[int]) -> dict[str, dict[str, dict[int, float]]]:
    """Per-dimension binary MAP@k (Exact only) and graded nDCG@k."""
    out = {}
    for dim in W5H_GRADED:
        grades = [j.w5h.get(dim, Grade.NOT_RELEVANT) for j in judgments]
        rel = [g is Grade.EXACT for g in grades]
        gains = [g.gain for g in grades]
        out[dim] = {
            "map": {k: average_precision_at_k(rel, k) for k in ks},
            "ndcg": {k: ndcg_at_k(gains, k) for k in ks},
        }
    return out


def evaluate(pred_raw: dict, gold_raw: dict, ks: Sequence[int] = DEFAULT_K, label: str = "") -> CorpusEval:
    gold = GoldSet.from_json(gold_raw)
    digest = pred_raw.get("corpus_digest")
    if gold.corpus_digest and digest and gold.corpus_digest != digest:
        raise EvalError("MismatchedCorpus", f"{label or 'prediction'} was built from a different corpus than its gold file")
    preds = load_predictions(pred_raw)
    al = match_predictions(preds, gold)
    if gold.judgments:
        known = {p.episode_id for p in preds}
        stray = sorted(set(gold.judgments) - known)
        if stray:
            raise EvalError("UnknownEpisode", f"judged episodes missing from predictions: {', '.join(stray)}")
        derived = derive_judgments(al, gold.distractors)
        judgments = [gold.judgments.get(p.episode_id, d) for p, d in zip(preds, derived)]
    else:
        judgments = derive_judgments(al, gold.distractors)
    rel = [j.binary for j in judgments]
    gains = [j.grade.gain for j in judgments]
    return CorpusEval(
        label=label,
        n_pred=len(preds),
        n_gold=len(gold.episodes),
        matched=al.matched_gold,
        recall=recall_proxy(al),
        precision=set_precision(al),
        r_precision=r_precision(al),
        map_at={k: average_precision_at_k(rel, k) for k in ks},
        ndcg_at={k: ndcg_at_k(gains, k) for k in ks},
        w5h=w5h_dimension_metrics(judgments, ks),
    )


@dataclass
class EvalReport:
    ks: tuple[int, ...]
    corpora: list[CorpusEval]

    def summary(self) -> dict:
        c = self.corpora
        return {
            "recall_proxy": mean([e.recall for e in c]),
            "precision": mean([e.precision for e in c]),
            "r_precision": mean([e.r_precision for e in c]),
            "map": {str(k): mean([e.map_at[k] for e in c]) for k in self.ks},
            "ndcg": {str(k): mean([e.ndcg_at[k] for e in c]) for k in self.ks},
            "w5h": {
                d: {
                    m: {str(k): mean([e.w5h[d][m][k] for e in c]) for k in self.ks}
                    for m in ("map", "ndcg")
                }
                for d in W5H_GRADED
            },
        }

    def to_json(self) -> dict:
        return {"k": list(self.ks), "corpora": [e.to_json() for e in self.corpora], "mean": self.summary()}

    def to_text(self) -> str:
        head = ["corpus", "recall", "prec", "R-prec"] + [f"MAP@{k}" for k in self.ks] + [f"nDCG@{k}" for k in self.ks]
        rows = []
        for e in self.corpora:
            rows.append(
                [e.label, e.recall, e.precision, e.r_precision]
                + [e.map_at[k] for k in self.ks]
                + [e.ndcg_at[k] for k in self.ks]
            )
        s = self.summary()
        rows.append(
            ["mean", s["recall_proxy"], s["precision"], s["r_precision"]]
            + [s["map"][str(k)] for k in self.ks]
            + [s["ndcg"][str(k)] for k in self.ks]
        )
        lines = [_table(head, rows), "", "W5H dimensions (mean over corpora)"]
        dim_head = ["dimension"] + [f"MAP@{k}" for k in self.ks] + [f"nDCG@{k}" for k in self.ks]
        dim_rows = [
            [d] + [s["w5h"][d]["map"][str(k)] for k in self.ks] + [s["w5h"][d]["ndcg"][str(k)] for k in self.ks]
            for d in W5H_GRADED
        ]
        lines.append(_table(dim_head, dim_rows))
        return "\n".join(lines) + "\n"


def _table(head: list[str], rows: list[list[Any]]) -> str:
    cells = [head] + [[c if isinstance(c, str) else f"{c:.4f}" for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(head))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))  # noqa: E731
    return "\n".join([fmt(cells[0]), fmt(["-" * w for w in widths])] + [fmt(r) for r in cells[1:]])


def evaluate_files(pairs: Sequence[tuple[str | Path, str | Path]], ks: Sequence[int] = DEFAULT_K) -> EvalReport:
    ks = tuple(sorted(set(int(k) for k in ks)))
    corpora = [evaluate(load_json(p), load_json(g), ks, label=Path(p).stem) for p, g in pairs]
    return EvalReport(ks, corpora)
