"""Neutral augmentation, cross-validation splits and document-level macro F1."""
import math

import numpy as np
import pytest

from app.services.evaluation.scoring import (
    DocumentPairs,
    EvaluationReport,
    Scale,
    augment_neutral,
    effectiveness_ratio,
    evaluate,
    evaluate_documents,
    macro_f1,
    majority_vote,
    read_summary,
    split_cv3,
)
from app.utils.document_processor import CorpusDocument, Label

POS, NEG, NEU = Label.POSITIVE, Label.NEGATIVE, Label.NEUTRAL
LABELS = (POS, NEG, NEU)


def document(doc_id: str, sentence_count: int) -> CorpusDocument:
    return CorpusDocument(doc_id=doc_id, sentences=["x ."] * sentence_count)


def f1_oracle(gold, predicted, cls):
    tp = sum(g is cls and p is cls for g, p in zip(gold, predicted))
    fp = sum(g is not cls and p is cls for g, p in zip(gold, predicted))
    fn = sum(g is cls and p is not cls for g, p in zip(gold, predicted))
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def macro_oracle(predictions, gold):
    scores = []
    for doc_id in sorted({k[0] for k in gold}):
        keys = [k for k in gold if k[0] == doc_id]
        g = [gold[k] for k in keys]
        p = [predictions.get(k, NEU) for k in keys]
        classes = [c for c in (POS, NEG) if c in g or c in p]
        if classes:
            scores.append(np.mean([f1_oracle(g, p, c) for c in classes]))
    return float(np.mean(scores)) if scores else 0.0


class TestNeutralAugmentation:

    def test_unannotated_cooccurring_pairs_become_neutral(self):
        doc = CorpusDocument(doc_id="d", sentences=["[[A|a]] met [[B|b]] and [[C|c]] ."])
        extended = augment_neutral(doc, {("a", "b"): POS}, Scale.THREE)
        assert extended[("a", "b")] is POS
        assert {k for k, v in extended.items() if v is NEU} == {
            ("a", "c"), ("b", "a"), ("b", "c"), ("c", "a"), ("c", "b")
        }

    def test_single_entity_sentences_add_nothing(self):
        doc = CorpusDocument(doc_id="d", sentences=["[[A|a]] spoke .", "[[B|b]] spoke ."])
        assert augment_neutral(doc, {}, Scale.THREE) == {}

    def test_synonyms_are_one_participant(self):
        doc = CorpusDocument(
            doc_id="d",
            sentences=["[[USA|usa]] and [[America|america|usa]] met [[Georgia|georgia]] ."],
        )
        extended = augment_neutral(doc, {("usa", "georgia"): POS}, Scale.THREE)
        assert extended == {("usa", "georgia"): POS, ("georgia", "usa"): NEU}

    def test_two_scale_is_unchanged(self):
        doc = CorpusDocument(doc_id="d", sentences=["[[A|a]] met [[B|b]] ."])
        assert augment_neutral(doc, {("a", "b"): NEG}, Scale.TWO) == {("a", "b"): NEG}


class TestCrossValidationSplit:

    def test_equal_documents_are_balanced(self):
        folds = split_cv3([document(f"d{k}", 5) for k in range(9)], seed=0)
        assert [len(f.doc_ids) for f in folds] == [3, 3, 3]
        assert [f.sentence_count for f in folds] == [15, 15, 15]

    def test_greedy_assignment(self):
        docs = [document(f"d{k}", n) for k, n in enumerate([10, 9, 8, 1, 1, 1])]
        folds = split_cv3(docs, seed=0)
        assert sorted(f.sentence_count for f in folds) == [10, 10, 10]
        assert folds[0].doc_ids == ["d0"]

    def test_partition_and_balance_bound(self, rng):
        for seed in range(30):
            counts = rng.integers(1, 40, size=int(rng.integers(3, 25)))
            docs = [document(f"d{k}", int(n)) for k, n in enumerate(counts)]
            folds = split_cv3(docs, seed=seed)
            ids = [doc_id for f in folds for doc_id in f.doc_ids]
            assert sorted(ids) == sorted(d.doc_id for d in docs)
            totals = [f.sentence_count for f in folds]
            assert max(totals) - min(totals) <= counts.max()

    def test_seed_only_breaks_ties(self):
        docs = [document(f"d{k}", 4) for k in range(6)]
        assert split_cv3(docs, seed=1)[0].doc_ids == split_cv3(docs, seed=1)[0].doc_ids
        distinct = {tuple(split_cv3(docs, seed=s)[0].doc_ids) for s in range(10)}
        assert len(distinct) > 1

    def test_too_few_documents(self):
        with pytest.raises(ValueError):
            split_cv3([document("a", 1), document("b", 1)])


class TestMacroF1:

    def test_hand_case(self):
        gold = {("d", "a", "b"): POS, ("d", "b", "c"): NEG, ("d", "a", "c"): NEU}
        predicted = {("d", "a", "b"): POS, ("d", "b", "c"): POS, ("d", "a", "c"): NEU}
        # F1_pos = 2/3, F1_neg = 0
        assert macro_f1(predicted, gold) == pytest.approx(1.0 / 3.0)

    def test_everything_predicted_positive(self):
        gold = {("d", "a", "b"): POS, ("d", "a", "c"): POS, ("d", "b", "c"): NEG, ("d", "c", "a"): NEG}
        assert macro_f1({key: POS for key in gold}, gold) == pytest.approx(1.0 / 3.0)

    def test_perfect_and_all_neutral(self):
        gold = {("d", "a", "b"): POS, ("d", "b", "c"): NEG, ("e", "a", "b"): NEG}
        assert macro_f1(dict(gold), gold) == pytest.approx(1.0)
        assert macro_f1({k: NEU for k in gold}, gold) == 0.0

    def test_missing_prediction_counts_as_neutral(self):
        gold = {("d", "a", "b"): POS, ("d", "b", "a"): POS}
        assert macro_f1({("d", "a", "b"): POS}, gold) == pytest.approx(2.0 / 3.0)

    def test_neutral_only_document_is_left_out(self):
        gold = {("d", "a", "b"): POS, ("e", "a", "b"): NEU}
        predicted = {("d", "a", "b"): POS, ("e", "a", "b"): NEU}
        assert macro_f1(predicted, gold) == pytest.approx(1.0)

    def test_matches_confusion_count_oracle(self, rng):
        for _ in range(200):
            gold, predicted = {}, {}
            for d in range(int(rng.integers(1, 5))):
                for k in range(int(rng.integers(1, 8))):
                    key = (f"d{d}", f"s{k}", f"o{k}")
                    gold[key] = LABELS[int(rng.integers(3))]
                    if rng.random() < 0.9:
                        predicted[key] = LABELS[int(rng.integers(3))]
            assert macro_f1(predicted, gold) == pytest.approx(macro_oracle(predicted, gold), abs=1e-12)

    def test_document_relabelling_does_not_matter(self):
        gold = {("d", "a", "b"): POS, ("d", "b", "c"): NEG, ("e", "x", "y"): POS}
        predicted = {("d", "a", "b"): NEG, ("d", "b", "c"): NEG, ("e", "x", "y"): POS}
        renamed = {("z" + k[0], *k[1:]): v for k, v in gold.items()}
        renamed_predicted = {("z" + k[0], *k[1:]): v for k, v in predicted.items()}
        assert macro_f1(predicted, gold) == pytest.approx(macro_f1(renamed_predicted, renamed))


class TestVoting:

    def test_majority(self):
        assert majority_vote([POS, NEG, POS], Scale.THREE) == (POS, False)

    def test_tie_policy(self):
        assert majority_vote([POS, NEG], Scale.THREE) == (NEU, True)
        assert majority_vote([POS, NEG], Scale.TWO) == (POS, True)
        assert majority_vote([POS, NEG, NEU], Scale.THREE) == (NEU, True)


def labelled_documents():
    """Contexts are stand-ins: the predictors below read the label from them."""
    return [
        DocumentPairs("d1", {("a", "b"): POS, ("b", "c"): NEG, ("a", "c"): NEU},
                      {("a", "b"): [(POS, None), (POS, None)], ("b", "c"): [(NEG, None)], ("a", "c"): []}),
        DocumentPairs("d2", {("x", "y"): NEG}, {("x", "y"): [(NEG, None), (POS, None), (NEG, None)]}),
    ]


class TestEvaluation:

    def test_oracle_predictor_scores_one(self):
        f1, rows, ties = evaluate_documents(lambda context, _: context, labelled_documents(), Scale.THREE)
        assert f1 == pytest.approx(1.0)
        assert ties == 0
        assert ("d1", "a", "c", "neu", "neu") in rows

    def test_constant_predictor(self):
        f1, _, _ = evaluate_documents(lambda *_: NEU, labelled_documents(), Scale.THREE)
        assert f1 == 0.0

    def test_two_scale_skips_pairs_without_contexts(self):
        documents = [DocumentPairs("d", {("a", "b"): POS, ("b", "a"): NEG}, {("a", "b"): [(POS, None)]})]
        f1, rows, _ = evaluate_documents(lambda context, _: context, documents, Scale.TWO)
        assert rows == [("d", "a", "b", "pos", "pos")]
        assert f1 == pytest.approx(1.0)

    def test_three_scale_scores_missing_contexts_as_neutral(self):
        documents = [DocumentPairs("d", {("a", "b"): POS, ("b", "a"): NEG}, {("a", "b"): [(POS, None)]})]
        f1, rows, _ = evaluate_documents(lambda context, _: context, documents, Scale.THREE)
        assert ("d", "b", "a", "neg", "neu") in rows
        assert f1 == pytest.approx(0.5)

    def test_report_file(self, tmp_path):
        documents = labelled_documents()
        report = evaluate(
            {"cv1": lambda context, _: context, "cv2": lambda *_: NEU},
            {"cv1": documents, "cv2": documents},
            Scale.THREE,
        )
        assert report.fold_scores == {"cv1": pytest.approx(1.0), "cv2": 0.0}
        assert report.average == pytest.approx(0.5)
        path = tmp_path / "scores.tsv"
        report.write(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "d1\ta\tb\tpos\tpos"
        assert lines[-1] == "# F1_avg\t0.500000"
        assert read_summary(path) == {"F1_cv1": 1.0, "F1_cv2": 0.0, "F1_avg": 0.5}

    def test_empty_report(self):
        assert EvaluationReport().average == 0.0


class TestEffectivenessRatio:

    def test_relative_gain(self):
        assert effectiveness_ratio(0.33, 0.30) == pytest.approx(0.1)
        assert effectiveness_ratio(0.27, 0.30) == pytest.approx(-0.1)

    def test_zero_baseline(self):
        assert effectiveness_ratio(0.2, 0.0) == math.inf
        assert effectiveness_ratio(0.0, 0.0) == 0.0
