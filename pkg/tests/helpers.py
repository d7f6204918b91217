"""Test helpers: finite differences, toy inputs and toy models."""
import numpy as np

from app.services.autodiff.tensor import Node
from app.services.embeddings.embedding_manager import (
    FEATURE_TABLES,
    EmbeddingManager,
    InputEmbedding,
    feature_table_sizes,
)
from app.services.encoders.models import ContextModel, EncoderConfig, EncoderKind
from app.services.evaluation.scoring import Scale
from app.services.training.dataset import DatasetBuilder
from app.utils.context_parser import ContextExtractor, FrameLexicon, TermParser

TOY_N = 6
TOY_N_MAX = 6


def numeric_gradient(loss_fn, node: Node, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of loss_fn() with respect to every entry of node.value."""
    grad = np.zeros_like(node.value)
    flat = node.value.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = float(loss_fn().value)
        flat[i] = original - h
        minus = float(loss_fn().value)
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2 * h)
    return grad


def random_embedding(rng: np.random.Generator, d_word: int = 1, n: int = TOY_N, n_max: int = TOY_N_MAX,
                     subj_pos: int = 1, obj_pos: int = 4) -> InputEmbedding:
    words = np.zeros((n_max, d_word))
    words[:n] = rng.normal(size=(n, d_word))
    sizes = feature_table_sizes(n_max)
    indices = np.zeros((n_max, len(FEATURE_TABLES)), dtype=np.int64)
    for k, name in enumerate(FEATURE_TABLES):
        indices[:n, k] = rng.integers(0, sizes[name], size=n)
    return InputEmbedding(words, indices, n, subj_pos, obj_pos)


def toy_model(kind: EncoderKind, seed: int = 0, class_count: int = 3, n_max: int = TOY_N_MAX) -> ContextModel:
    """m = 7 (d_word=1 plus six 1-dim feature tables), t=4, l=2, h=5, h_mlp=3."""
    config = EncoderConfig(
        kind=kind, conv_window=2, filter_count=4, lstm_hidden=5, mlp_hidden=3,
        class_count=class_count, keep_prob=0.8,
    )
    return ContextModel(config, d_word=1, d_feat=1, n_max=n_max, seed=seed)


def bundle_builder(bundle, scale: Scale = Scale.THREE, n_max: int = 50, seed: int = 0) -> DatasetBuilder:
    lexicon = FrameLexicon(bundle.frames)
    parser = TermParser(lexicon, n_max=n_max, pair_distance=10)
    embeddings = EmbeddingManager(bundle.embeddings, bundle.pos_table, n_max=n_max, seed=seed)
    return DatasetBuilder(ContextExtractor(parser), embeddings, scale)
