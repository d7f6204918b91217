"""
Task construction, document splitting and macro-averaged F1 scoring.

- Two-scale: positive/negative attitudes only; a pair is compared only when
  at least one context of it exists in the document.
- Three-scale: annotated attitudes plus automatically added neutral pairs
  (ordered entity pairs co-occurring in a sentence but not annotated).

F1 is computed per document as the mean of the positive-class and
negative-class F1 and then averaged over documents. Document-level pair
labels come from a majority vote over that pair's context predictions.
"""
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from sklearn.metrics import precision_recall_fscore_support

from app.services.embeddings.embedding_manager import InputEmbedding
from app.utils.context_parser import Context
from app.utils.document_processor import CorpusDocument, EntityMention, Label, parse_markup

logger = logging.getLogger(__name__)

PairKey = Tuple[str, str]
AttitudeKey = Tuple[str, str, str]
Predictor = Callable[[Context, InputEmbedding], Label]

SENTIMENT_CLASSES = (Label.POSITIVE, Label.NEGATIVE)


class Scale(str, Enum):
    TWO = "two"
    THREE = "three"

    @property
    def labels(self) -> Tuple[Label, ...]:
        """Class id -> label."""
        if self is Scale.TWO:
            return Label.POSITIVE, Label.NEGATIVE
        return Label.POSITIVE, Label.NEGATIVE, Label.NEUTRAL

    @property
    def class_count(self) -> int:
        return len(self.labels)


class EvalFormat(str, Enum):
    CV3 = "cv3"
    FIXED = "fixed"


class TaskSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scale: Scale = Scale.THREE
    eval_format: EvalFormat = EvalFormat.CV3


@dataclass
class Fold:
    doc_ids: List[str] = field(default_factory=list)
    sentence_count: int = 0


@dataclass
class DocumentPairs:
    """Gold pair labels of one document with the contexts found for each pair."""
    doc_id: str
    gold: Dict[PairKey, Label] = field(default_factory=dict)
    contexts: Dict[PairKey, List[Tuple[Context, InputEmbedding]]] = field(default_factory=dict)


@dataclass
class EvaluationReport:
    fold_scores: Dict[str, float] = field(default_factory=dict)
    rows: List[Tuple[str, str, str, str, str]] = field(default_factory=list)
    ties: int = 0

    @property
    def average(self) -> float:
        return float(np.mean(list(self.fold_scores.values()))) if self.fold_scores else 0.0

    def write(self, file_path: Path):
        """Prediction rows followed by a summary block of per-fold F1 values."""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        table = pd.DataFrame(self.rows, columns=["doc_id", "subject", "object", "gold", "pred"])
        table.to_csv(file_path, sep="\t", header=False, index=False)
        with open(file_path, "a", encoding="utf-8") as file:
            for name, score in self.fold_scores.items():
                file.write(f"# F1_{name}\t{score:.6f}\n")
            file.write(f"# F1_avg\t{self.average:.6f}\n")
        logger.info(f"Wrote {len(self.rows)} predictions and {len(self.fold_scores)} fold scores to {file_path}")


def read_summary(file_path: Path) -> Dict[str, float]:
    """Parse the `# F1_<name>` summary block of a score report."""
    scores = {}
    with open(file_path, "r", encoding="utf-8") as file:
        for line in file:
            if line.startswith("# F1_"):
                name, value = line[2:].rstrip("\n").split("\t")
                scores[name] = float(value)
    return scores


def augment_neutral(
    document: CorpusDocument,
    attitudes: Mapping[PairKey, Label],
    scale: Scale = Scale.THREE,
) -> Dict[PairKey, Label]:
    """Add a neutral attitude for every unannotated ordered pair sharing a sentence."""
    extended = dict(attitudes)
    if scale is not Scale.THREE:
        return extended
    groups = document.entity_groups()
    seen = {(groups.get(s, s), groups.get(o, o)) for s, o in attitudes}
    for sentence in document.sentences:
        entities = []
        for piece in parse_markup(sentence):
            if isinstance(piece, EntityMention) and piece.entity_id not in [e.entity_id for e in entities]:
                entities.append(piece)
        for a in entities:
            for b in entities:
                key = (a.synonym_group, b.synonym_group)
                if a.synonym_group == b.synonym_group or key in seen:
                    continue
                seen.add(key)
                extended[(a.entity_id, b.entity_id)] = Label.NEUTRAL
    return extended


def split_cv3(documents: Sequence[CorpusDocument], seed: int = 0, folds: int = 3) -> List[Fold]:
    """
    Greedy sentence-balanced partition: documents in descending sentence count
    (ties ordered by a seeded permutation) go to the currently lightest fold.
    """
    if len(documents) < folds:
        raise ValueError(f"Cross-validation needs at least {folds} documents, got {len(documents)}")
    permutation = np.random.default_rng(seed).permutation(len(documents))
    tie_rank = {int(doc_index): rank for rank, doc_index in enumerate(permutation)}
    order = sorted(range(len(documents)), key=lambda i: (-documents[i].sentence_count, tie_rank[i]))
    result = [Fold() for _ in range(folds)]
    for i in order:
        lightest = min(range(folds), key=lambda k: (result[k].sentence_count, k))
        result[lightest].doc_ids.append(documents[i].doc_id)
        result[lightest].sentence_count += documents[i].sentence_count
    logger.info(f"CV split sentence counts: {[f.sentence_count for f in result]}")
    return result


def _class_f1(gold: Sequence[Label], predicted: Sequence[Label]) -> List[float]:
    """F1 of each sentiment class present in gold or predictions."""
    present = [c for c in SENTIMENT_CLASSES if c in gold or c in predicted]
    if not present:
        return []
    _, _, f1, _ = precision_recall_fscore_support(
        [g.value for g in gold],
        [p.value for p in predicted],
        labels=[c.value for c in present],
        average=None,
        zero_division=0,
    )
    return [float(v) for v in f1]


def macro_f1(predictions: Mapping[AttitudeKey, Label], gold: Mapping[AttitudeKey, Label]) -> float:
    """
    Mean over documents of the averaged positive/negative F1.

    A sentiment class absent from both gold and predictions of a document is
    left out of that document's average; a document with neither class is
    left out of the overall mean.
    """
    by_document: Dict[str, List[AttitudeKey]] = defaultdict(list)
    for key in gold:
        by_document[key[0]].append(key)

    scores = []
    for doc_id in sorted(by_document):
        keys = by_document[doc_id]
        gold_labels = [gold[k] for k in keys]
        predicted = [predictions.get(k, Label.NEUTRAL) for k in keys]
        class_scores = _class_f1(gold_labels, predicted)
        if class_scores:
            scores.append(float(np.mean(class_scores)))
    return float(np.mean(scores)) if scores else 0.0


def majority_vote(labels: Sequence[Label], scale: Scale) -> Tuple[Label, bool]:
    """Most frequent label; ties resolve to neutral (three-scale) or positive (two-scale)."""
    counts = Counter(labels).most_common()
    top = counts[0][1]
    leaders = [label for label, count in counts if count == top]
    if len(leaders) == 1:
        return leaders[0], False
    return (Label.NEUTRAL if scale is Scale.THREE else Label.POSITIVE), True


def evaluate_documents(
    predictor: Predictor,
    documents: Iterable[DocumentPairs],
    scale: Scale,
) -> Tuple[float, List[Tuple[str, str, str, str, str]], int]:
    """Score documents; returns (macro F1, prediction rows, tie count)."""
    gold: Dict[AttitudeKey, Label] = {}
    predicted: Dict[AttitudeKey, Label] = {}
    rows = []
    ties = 0
    for document in documents:
        for pair, label in document.gold.items():
            contexts = document.contexts.get(pair, [])
            if not contexts and scale is Scale.TWO:
                continue
            key = (document.doc_id, pair[0], pair[1])
            if contexts:
                vote, tied = majority_vote([predictor(c, e) for c, e in contexts], scale)
                ties += tied
            else:
                vote = Label.NEUTRAL
            gold[key] = label
            predicted[key] = vote
            rows.append((document.doc_id, pair[0], pair[1], label.value, vote.value))
    if ties:
        logger.warning(f"{ties} pair votes were tied and resolved by the tie policy")
    return macro_f1(predicted, gold), rows, ties


def evaluate(
    predictors: Mapping[str, Predictor],
    folds: Mapping[str, Sequence[DocumentPairs]],
    scale: Scale,
) -> EvaluationReport:
    """Score each fold (or the test part) with its own predictor."""
    report = EvaluationReport()
    for name, documents in folds.items():
        score, rows, ties = evaluate_documents(predictors[name], documents, scale)
        report.fold_scores[name] = score
        report.rows.extend(rows)
        report.ties += ties
        logger.info(f"F1_{name} = {score:.4f} over {len(documents)} documents")
    return report


def effectiveness_ratio(result: float, baseline: float) -> float:
    """Relative gain r = result / baseline - 1."""
    if baseline == 0:
        return math.inf if result > 0 else 0.0
    return result / baseline - 1.0
