"""
Term embeddings and per-term input feature assembly.

Words and frames are looked up in a precomputed word embedding model. A term
missing from the model is split into parts and each part is covered by
character n-grams, longest first starting from trigrams; the vectors found
are averaged. Entity masks and token symbols get one Gaussian vector per
symbol, fixed for a run by its seed.

Every term is additionally described by six auxiliary indices feeding
learnable feature tables (see FEATURE_TABLES):
- signed distance to the object / subject participant
- absolute distance to the nearest synonym of the object / subject
- part-of-speech tag (words only, "unknown" otherwise)
- A0->A1 polarity (frames only, "neutral" otherwise)
"""
import csv
import logging
import re
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from app.services.autodiff.tensor import DTYPE
from app.utils.context_parser import Context, Term, TermGroup
from app.utils.document_processor import Label

logger = logging.getLogger(__name__)

POS_TAGS = ("unknown", "noun", "verb", "adj", "adv", "prep", "conj", "pron", "num", "part")
POLARITY_VALUES = {Label.NEUTRAL: 0, Label.POSITIVE: 1, Label.NEGATIVE: 2}
FEATURE_TABLES = ("d_obj", "d_subj", "sd_obj", "sd_subj", "pos", "a0a1")

PART_SEPARATORS = re.compile(r"[-_\s]+")


def feature_table_sizes(n_max: int) -> Dict[str, int]:
    return {
        "d_obj": 2 * n_max + 1,
        "d_subj": 2 * n_max + 1,
        "sd_obj": n_max + 1,
        "sd_subj": n_max + 1,
        "pos": len(POS_TAGS),
        "a0a1": len(POLARITY_VALUES),
    }


class EmbeddingModel:
    """Word -> vector mapping of a fixed dimension."""

    def __init__(self, vocabulary: Mapping[str, Sequence[float]], dimension: Optional[int] = None):
        self.vocabulary: Dict[str, np.ndarray] = {
            word: np.asarray(vector, dtype=DTYPE) for word, vector in vocabulary.items()
        }
        if dimension is None:
            if not self.vocabulary:
                raise ValueError("Cannot infer the dimension of an empty embedding model")
            dimension = len(next(iter(self.vocabulary.values())))
        self.dimension = dimension
        for word, vector in self.vocabulary.items():
            if vector.shape != (dimension,):
                raise ValueError(f"Vector of '{word}' has shape {vector.shape}, expected ({dimension},)")

    @classmethod
    def load(cls, file_path: Path) -> "EmbeddingModel":
        """Load `word v1 ... vd` lines."""
        table = pd.read_csv(
            file_path,
            sep=" ",
            header=None,
            index_col=0,
            quoting=csv.QUOTE_NONE,
            keep_default_na=False,
            na_filter=False,
        )
        table.index = table.index.astype(str)
        model = cls({word: row.to_numpy(dtype=DTYPE) for word, row in table.iterrows()}, table.shape[1])
        logger.info(f"Loaded {len(model)} word vectors of dimension {model.dimension} from {file_path}")
        return model

    def save(self, file_path: Path):
        Path(file_path).parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, "w", encoding="utf-8") as file:
            for word, vector in self.vocabulary.items():
                file.write(word + " " + " ".join(repr(float(v)) for v in vector) + "\n")

    def __contains__(self, word: str) -> bool:
        return word in self.vocabulary

    def __len__(self) -> int:
        return len(self.vocabulary)

    def get(self, word: str) -> Optional[np.ndarray]:
        return self.vocabulary.get(word)


class SymbolVectors:
    """Per-symbol Gaussian vectors, reproducible from (seed, symbol) alone."""

    def __init__(self, dimension: int, seed: int, scale: float = 0.5):
        self.dimension = dimension
        self.seed = seed
        self.scale = scale
        self._cache: Dict[str, np.ndarray] = {}

    def vector(self, symbol: str) -> np.ndarray:
        if symbol not in self._cache:
            rng = np.random.default_rng([self.seed, zlib.crc32(symbol.encode("utf-8"))])
            self._cache[symbol] = rng.normal(0.0, self.scale, self.dimension).astype(DTYPE)
        return self._cache[symbol]


class WordEmbedder:
    """Embeds single terms; counts words with no matchable n-gram."""

    def __init__(self, model: EmbeddingModel, symbols: SymbolVectors, max_ngram: int = 3):
        if symbols.dimension != model.dimension:
            raise ValueError(
                f"Symbol dimension {symbols.dimension} differs from model dimension {model.dimension}"
            )
        self.model = model
        self.symbols = symbols
        self.max_ngram = max_ngram
        self.misses = 0

    @property
    def dimension(self) -> int:
        return self.model.dimension

    def embed_word(self, term: Term) -> np.ndarray:
        if term.group in (TermGroup.WORD, TermGroup.FRAME):
            vector = self.model.get(term.surface)
            if vector is not None:
                return vector
            return self.ngram_vector(term.surface)
        return self.symbols.vector(term.surface)

    def ngram_vector(self, surface: str) -> np.ndarray:
        found: List[np.ndarray] = []
        for part in filter(None, PART_SEPARATORS.split(surface)):
            direct = self.model.get(part)
            if direct is not None:
                found.append(direct)
                continue
            found.extend(self._cover_with_ngrams(part))
        if not found:
            self.misses += 1
            logger.debug(f"No n-gram of '{surface}' found in the embedding model")
            return np.zeros(self.dimension, dtype=DTYPE)
        return np.mean(found, axis=0)

    def _cover_with_ngrams(self, part: str) -> List[np.ndarray]:
        vectors = []
        i = 0
        while i < len(part):
            for n in range(min(self.max_ngram, len(part) - i), 0, -1):
                vector = self.model.get(part[i:i + n])
                if vector is not None:
                    vectors.append(vector)
                    i += n
                    break
            else:
                i += 1
        return vectors


@dataclass
class InputEmbedding:
    """
    Padded per-context input: fixed word vectors plus feature table indices.

    Rows at or beyond `length` are zero and masked out.
    """
    word_vectors: np.ndarray
    feature_indices: np.ndarray
    length: int
    subj_pos: int
    obj_pos: int

    @property
    def n_max(self) -> int:
        return self.word_vectors.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.n_max) < self.length

    def dense(self, tables: Mapping[str, np.ndarray]) -> np.ndarray:
        """The n_max x m matrix X with learnable feature rows filled in."""
        blocks = [self.word_vectors[:self.length]]
        for k, name in enumerate(FEATURE_TABLES):
            blocks.append(tables[name][self.feature_indices[:self.length, k]])
        dense = np.zeros((self.n_max, sum(b.shape[1] for b in blocks)), dtype=DTYPE)
        dense[:self.length] = np.concatenate(blocks, axis=1)
        return dense


class FeatureAssembler:
    """Builds InputEmbedding objects for contexts."""

    def __init__(self, embedder: WordEmbedder, pos_table: Optional[Mapping[str, str]] = None, n_max: int = 50):
        self.embedder = embedder
        self.pos_table = dict(pos_table or {})
        self.n_max = n_max

    def pos_index(self, term: Term) -> int:
        if term.group is not TermGroup.WORD:
            return 0
        tag = self.pos_table.get(term.surface, "unknown")
        return POS_TAGS.index(tag) if tag in POS_TAGS else 0

    def assemble(self, context: Context) -> InputEmbedding:
        length = len(context)
        if length > self.n_max:
            raise ValueError(f"Context of {length} terms exceeds n_max={self.n_max}")
        n = self.n_max
        words = np.zeros((n, self.embedder.dimension), dtype=DTYPE)
        indices = np.zeros((n, len(FEATURE_TABLES)), dtype=np.int64)

        obj_synonyms = self._synonym_positions(context, context.obj_pos)
        subj_synonyms = self._synonym_positions(context, context.subj_pos)
        for i, term in enumerate(context.terms):
            words[i] = self.embedder.embed_word(term)
            indices[i] = (
                int(np.clip(i - context.obj_pos, -n, n)) + n,
                int(np.clip(i - context.subj_pos, -n, n)) + n,
                min(int(np.abs(obj_synonyms - i).min()), n),
                min(int(np.abs(subj_synonyms - i).min()), n),
                self.pos_index(term),
                POLARITY_VALUES[term.polarity] if term.group is TermGroup.FRAME else 0,
            )
        return InputEmbedding(words, indices, length, context.subj_pos, context.obj_pos)

    @staticmethod
    def _synonym_positions(context: Context, participant: int) -> np.ndarray:
        group = context.terms[participant].synonym_group
        positions = [
            t.position for t in context.terms
            if t.group.is_entity and group is not None and t.synonym_group == group
        ]
        return np.asarray(positions or [participant])


def assemble_features(context: Context, assembler: FeatureAssembler) -> InputEmbedding:
    return assembler.assemble(context)


class EmbeddingManager:
    """Embeds batches of contexts for training, evaluation and analysis."""

    def __init__(
        self,
        model: EmbeddingModel,
        pos_table: Optional[Mapping[str, str]] = None,
        n_max: int = 50,
        seed: int = 0,
        symbol_scale: float = 0.5,
    ):
        symbols = SymbolVectors(model.dimension, seed, symbol_scale)
        self.embedder = WordEmbedder(model, symbols)
        self.assembler = FeatureAssembler(self.embedder, pos_table, n_max)
        logger.info(f"Initialized EmbeddingManager with d_word={model.dimension}, n_max={n_max}")

    @property
    def dimension(self) -> int:
        return self.embedder.dimension

    def embed_contexts(self, contexts: Sequence[Context]) -> List[InputEmbedding]:
        embeddings = [self.assembler.assemble(c) for c in contexts]
        logger.debug(f"Embedded {len(embeddings)} contexts ({self.embedder.misses} n-gram misses so far)")
        return embeddings
