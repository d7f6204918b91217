"""
Command layer: binds configuration, files and services into runs.

Each command takes a validated RunConfig, resolves the files it needs, and
writes its artifacts below `PATHS__OUT`:
- train:         model.ckpt + metrics.tsv (fold{i}/ in cv3 format)
- eval:          scores.tsv
- annotate:      ds_corpus.jsonl (or PATHS__DS_CORPUS)
- analyze:       analysis/report.txt, analysis/<group>_<S|N>.tsv, analysis/heatmaps.tsv
- gen-synthetic: the synthetic bundle plus a ready-to-use config.env
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from app.config.settings import ConfigError, RunConfig, TrainingMode, write_config
from app.services.analysis.attention_stats import (
    AnalysisGroup,
    AnalysisReport,
    AttentionAnalyzer,
    TermGrouper,
    compare_groups,
)
from app.services.annotation.annotator import AnnotationMode, AnnotationStats, Annotator, PairList
from app.services.annotation.synthetic import GeneratorConfig, generate_bundle
from app.services.embeddings.embedding_manager import EmbeddingManager, EmbeddingModel
from app.services.encoders.models import CheckpointError, ContextModel
from app.services.evaluation.scoring import (
    DocumentPairs,
    EvalFormat,
    EvaluationReport,
    effectiveness_ratio,
    evaluate,
    read_summary,
    split_cv3,
)
from app.services.training.dataset import DatasetBuilder, training_examples
from app.services.training.trainer import Trainer, TrainingResult, model_predictor
from app.utils.context_parser import ContextExtractor, FrameLexicon, IdentityLemmatizer, TableLemmatizer, TermParser
from app.utils.document_processor import CorpusDocument, DocumentProcessor

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.ckpt"
METRICS_NAME = "metrics.tsv"
SCORES_NAME = "scores.tsv"


class Services:
    """Lazily built services of one run (models and lexicons load on first use)."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.processor = DocumentProcessor()
        self._services = {}

    def get(self, name: str):
        if name not in self._services:
            logger.info(f"Initializing service: {name}")
            self._services[name] = getattr(self, f"_build_{name}")()
        return self._services[name]

    def _build_parser(self) -> TermParser:
        paths, text = self.config.paths, self.config.text
        self.config.require_paths("frames")
        lemmatizer = (
            TableLemmatizer(self.processor.read_lemma_table(paths.lemmas)) if paths.lemmas else IdentityLemmatizer()
        )
        lexicon = FrameLexicon(self.processor.read_frame_lexicon(paths.frames), lemmatizer)
        return TermParser(lexicon, lemmatizer, text.negation_particles, text.n_max, text.pair_distance)

    def _build_embeddings(self) -> EmbeddingManager:
        paths, text = self.config.paths, self.config.text
        self.config.require_paths("embeddings")
        pos_table = self.processor.read_pos_table(paths.pos) if paths.pos else None
        return EmbeddingManager(
            EmbeddingModel.load(paths.embeddings), pos_table, text.n_max, self.config.seed, text.symbol_scale
        )

    def _build_dataset(self) -> DatasetBuilder:
        return DatasetBuilder(ContextExtractor(self.get("parser")), self.get("embeddings"), self.config.task.scale)

    def _build_grouper(self) -> TermGrouper:
        paths = self.config.paths
        return TermGrouper(
            self.processor.read_pos_table(paths.pos) if paths.pos else None,
            self.processor.read_sentiment_lexicon(paths.sentiment) if paths.sentiment else None,
        )


@dataclass
class Split:
    """One train/evaluate partition of the main corpus."""
    name: str
    train: List[CorpusDocument]
    test: List[CorpusDocument]
    directory: Path


def _check_optional_paths(config: RunConfig):
    present = [name for name in ("pos", "lemmas", "sentiment") if getattr(config.paths, name) is not None]
    config.require_paths(*present)


def resolve_splits(config: RunConfig, documents: List[CorpusDocument]) -> List[Split]:
    out = Path(config.paths.out)
    if config.task.eval_format is EvalFormat.FIXED:
        train = [d for d in documents if d.split == "train"]
        test = [d for d in documents if d.split == "test"]
        if not train or not test:
            raise ConfigError([f"fixed format needs train and test documents, got {len(train)} and {len(test)}"])
        return [Split("test", train, test, out)]

    folds = split_cv3(documents, config.seed)
    by_id = {d.doc_id: d for d in documents}
    splits = []
    for i, fold in enumerate(folds):
        held_out = set(fold.doc_ids)
        splits.append(Split(
            f"cv{i + 1}",
            [d for d in documents if d.doc_id not in held_out],
            [by_id[doc_id] for doc_id in fold.doc_ids],
            out / f"fold{i + 1}",
        ))
    return splits


def _read_main_corpus(services: Services) -> List[CorpusDocument]:
    services.config.require_paths("corpus")
    return services.processor.read_corpus(services.config.paths.corpus)


def _read_ds_corpus(services: Services) -> List[CorpusDocument]:
    config = services.config
    if config.mode is not TrainingMode.DS:
        return []
    config.require_paths("ds_corpus")
    documents = services.processor.read_corpus(config.paths.ds_corpus)
    if not documents:
        logger.warning(f"DS corpus {config.paths.ds_corpus} is empty; training is equivalent to SL mode")
    return documents


def cmd_train(config: RunConfig) -> Dict[str, TrainingResult]:
    """Train one model per split; DS documents join every training side."""
    _check_optional_paths(config)
    services = Services(config)
    documents = _read_main_corpus(services)
    ds_documents = _read_ds_corpus(services)
    dataset = services.get("dataset")
    ds_pairs = dataset.build(ds_documents)

    results = {}
    for split in resolve_splits(config, documents):
        main_pairs = dataset.build(split.train)
        examples = training_examples(main_pairs + ds_pairs)
        eval_pairs = main_pairs + ds_pairs if config.train.stop_f1_scope == "mixture" else main_pairs
        model = ContextModel(
            config.encoder, services.get("embeddings").dimension, config.text.d_feat, config.text.n_max, config.seed
        )
        trainer = Trainer(model, config.train, config.task.scale, config.seed)
        logger.info(f"[{split.name}] {len(split.train)} main + {len(ds_documents)} DS documents")
        results[split.name] = trainer.fit(examples, eval_pairs, split.directory / METRICS_NAME)
        model.save(split.directory / CHECKPOINT_NAME)
    write_config(config, Path(config.paths.out) / "config.env")
    return results


def load_checkpoint(path: Path, config: RunConfig, embeddings: EmbeddingManager) -> ContextModel:
    model = ContextModel.load(path)
    if model.d_word != embeddings.dimension:
        raise CheckpointError(
            f"{path}: trained with d_word={model.d_word}, embedding model has {embeddings.dimension}"
        )
    if model.n_max != config.text.n_max:
        raise CheckpointError(f"{path}: trained with n_max={model.n_max}, config has {config.text.n_max}")
    return model


def _split_checkpoint(checkpoint: Optional[Path], split: Split) -> Path:
    """A checkpoint file applies to every split; a directory holds fold{i}/model.ckpt."""
    if checkpoint is None:
        return split.directory / CHECKPOINT_NAME
    checkpoint = Path(checkpoint)
    if checkpoint.is_dir():
        relative = split.directory.relative_to(split.directory.parent) if split.name != "test" else Path()
        return checkpoint / relative / CHECKPOINT_NAME
    return checkpoint


def _evaluation_models(
    config: RunConfig, services: Services, checkpoint: Optional[Path]
) -> List[Tuple[Split, ContextModel, List[DocumentPairs]]]:
    documents = _read_main_corpus(services)
    runs = []
    for split in resolve_splits(config, documents):
        path = _split_checkpoint(checkpoint, split)
        if not path.exists():
            raise CheckpointError(f"checkpoint {path} does not exist")
        model = load_checkpoint(path, config, services.get("embeddings"))
        runs.append((split, model, services.get("dataset").build(split.test)))
    return runs


def cmd_eval(config: RunConfig, checkpoint: Optional[Path] = None) -> EvaluationReport:
    """Score held-out documents of every split; writes scores.tsv."""
    _check_optional_paths(config)
    services = Services(config)
    runs = _evaluation_models(config, services, checkpoint)
    predictors = {split.name: model_predictor(model, config.task.scale) for split, model, _ in runs}
    report = evaluate(predictors, {split.name: pairs for split, _, pairs in runs}, config.task.scale)
    report.write(Path(config.paths.out) / SCORES_NAME)
    logger.info(f"F1_avg = {report.average:.4f}")
    return report


def cmd_annotate(config: RunConfig) -> AnnotationStats:
    """Distant-supervision annotation of the news collection."""
    _check_optional_paths(config)
    mode = config.annotate.mode
    required = ["news", "frames"] + (["pairs"] if mode is not AnnotationMode.FRAME_ONLY else [])
    config.require_paths(*required)
    services = Services(config)
    pair_list = PairList(services.processor.read_pair_list(config.paths.pairs)) if config.paths.pairs else PairList()
    annotator = Annotator(services.get("parser"), pair_list, mode)
    corpus, stats = annotator.annotate_corpus(services.processor.read_news(config.paths.news))
    target = config.paths.ds_corpus or Path(config.paths.out) / "ds_corpus.jsonl"
    services.processor.write_corpus(target, corpus)
    return stats


def cmd_analyze(config: RunConfig, checkpoint: Optional[Path] = None) -> AnalysisReport:
    """Attention weight statistics over the held-out contexts of every split."""
    _check_optional_paths(config)
    services = Services(config)
    analysis = config.analysis
    ranges = {AnalysisGroup(name): value for name, value in analysis.ranges().items()}
    merged: Optional[AnalysisReport] = None
    for split, model, pairs in _evaluation_models(config, services, checkpoint):
        analyzer = AttentionAnalyzer(model, services.get("grouper"), ranges, analysis.points, analysis.bandwidth)
        report = analyzer.analyze(pairs)
        if merged is None:
            merged = report
            continue
        merged.samples.extend(report.samples)
        merged.heatmap.extend(report.heatmap)
        for key, count in report.counts.items():
            merged.counts[key] = merged.counts.get(key, 0) + count
    merged.ks.clear()
    merged.delta.clear()
    merged.kde.clear()
    compare_groups(merged.samples, merged, ranges, analysis.points, analysis.bandwidth)
    merged.write(Path(config.paths.out) / "analysis")
    return merged


def cmd_gen_synthetic(config: RunConfig, generator: Optional[GeneratorConfig] = None) -> Dict[str, Path]:
    """Write a synthetic desk bundle and a run config pointing at it."""
    out = Path(config.paths.out)
    generator = generator or GeneratorConfig()
    paths = generate_bundle(config.seed, generator).write(out)
    data = config.model_dump()
    data["paths"].update(
        corpus=paths["corpus"], news=paths["news"], frames=paths["frames"], sentiment=paths["sentiment"],
        pos=paths["pos"], pairs=paths["pairs"], embeddings=paths["embeddings"], ds_corpus=out / "ds_corpus.jsonl",
    )
    paths["config"] = out / "config.env"
    write_config(RunConfig.model_validate(data), paths["config"])
    return paths


def cmd_compare(result: Path, baseline: Path) -> Dict[str, float]:
    """Effectiveness ratio of two score reports over their F1_avg (or F1_test) values."""
    scores = []
    for path in (result, baseline):
        summary = read_summary(path)
        value = summary.get("F1_avg", summary.get("F1_test"))
        if value is None:
            raise ValueError(f"{path} has no F1_avg or F1_test summary")
        scores.append(value)
    ratio = effectiveness_ratio(scores[0], scores[1])
    logger.info(f"F1 {scores[0]:.4f} vs {scores[1]:.4f}: ratio {ratio:+.4f}")
    return {"result": scores[0], "baseline": scores[1], "ratio": ratio}
