"""
Corpus -> evaluation pairs and labeled training examples.

Every document becomes a DocumentPairs object (gold pair labels plus the
embedded contexts of each pair). Training examples are the contexts of every
gold pair, labeled with the pair's gold label and keyed by their attitude so
the trainer can compose bags.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

from app.services.embeddings.embedding_manager import EmbeddingManager, InputEmbedding
from app.services.evaluation.scoring import AttitudeKey, DocumentPairs, Scale, augment_neutral
from app.utils.context_parser import Context, ContextExtractor
from app.utils.document_processor import CorpusDocument, Label

logger = logging.getLogger(__name__)


@dataclass
class TrainingExample:
    embedding: InputEmbedding
    label: Label
    attitude: AttitudeKey
    context: Context


class DatasetBuilder:
    """Extracts and embeds the contexts of every gold pair of a corpus."""

    def __init__(self, extractor: ContextExtractor, embeddings: EmbeddingManager, scale: Scale):
        self.extractor = extractor
        self.embeddings = embeddings
        self.scale = scale

    def gold_pairs(self, document: CorpusDocument) -> Dict[Tuple[str, str], Label]:
        gold = {
            a.key: a.label for a in document.attitudes
            if self.scale is Scale.THREE or a.label is not Label.NEUTRAL
        }
        return augment_neutral(document, gold, self.scale)

    def document_pairs(self, document: CorpusDocument) -> DocumentPairs:
        gold = self.gold_pairs(document)
        extracted = self.extractor.extract(document, gold)
        pairs = DocumentPairs(document.doc_id, gold)
        for pair, contexts in extracted.by_pair.items():
            embedded = self.embeddings.embed_contexts(contexts)
            pairs.contexts[pair] = list(zip(contexts, embedded))
        return pairs

    def build(self, documents: Iterable[CorpusDocument]) -> List[DocumentPairs]:
        result = [self.document_pairs(d) for d in documents]
        pair_count = sum(len(d.gold) for d in result)
        context_count = sum(len(c) for d in result for c in d.contexts.values())
        logger.info(
            f"Built {pair_count} pairs with {context_count} contexts from {len(result)} documents "
            f"({self.scale.value}-scale)"
        )
        return result


def training_examples(documents: Sequence[DocumentPairs]) -> List[TrainingExample]:
    """Every context of every gold pair; pairs without contexts contribute nothing."""
    examples = []
    for document in documents:
        for pair, label in document.gold.items():
            for context, embedding in document.contexts.get(pair, []):
                examples.append(TrainingExample(embedding, label, (document.doc_id, *pair), context))
    return examples


def group_by_attitude(examples: Iterable[TrainingExample]) -> "OrderedDict[AttitudeKey, List[TrainingExample]]":
    groups: "OrderedDict[AttitudeKey, List[TrainingExample]]" = OrderedDict()
    for example in examples:
        groups.setdefault(example.attitude, []).append(example)
    return groups
