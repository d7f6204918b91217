"""Shared fixtures: toy lexicons, parsers, embeddings and corpora."""
import numpy as np
import pytest

from app.services.annotation.synthetic import GeneratorConfig, generate_bundle
from app.services.embeddings.embedding_manager import EmbeddingModel
from app.utils.context_parser import FrameLexicon, TableLemmatizer, TermParser
from app.utils.document_processor import NewsDocument


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def frame_lexicon():
    lemmatizer = TableLemmatizer({
        "supporting": "support",
        "supports": "support",
        "condemning": "condemn",
        "criticized": "criticize",
        "praised": "praise",
    })
    return FrameLexicon.from_mapping(
        {"continue": "pos", "support": "pos", "praise": "pos", "condemn": "neg", "criticize": "neg",
         "sanction": "neg", "impose sanctions": "neg"},
        lemmatizer,
    )


@pytest.fixture
def parser(frame_lexicon):
    return TermParser(frame_lexicon, frame_lexicon.lemmatizer, n_max=50, pair_distance=10)


@pytest.fixture
def word_model():
    return EmbeddingModel({
        "talks": [1.0, 0.0],
        "said": [0.0, 1.0],
        "support": [1.0, 1.0],
        "con": [2.0, 0.0],
        "dem": [0.0, 2.0],
        "de": [1.0, -1.0],
    })


@pytest.fixture
def mccain_news():
    """Visit report whose title states USA -> Georgia positive; sentences 5 and 11 mention both."""
    sentences = [
        "[[McCain|mccain]] spoke in Tbilisi on Monday .",
        "He met the president of [[Georgia|georgia]] .",
        "[[Russia|russia]] criticized the visit .",
        "The senator said the region needs stability .",
        "[[USA|usa]] will continue supporting [[Georgia|georgia]] , he said .",
        "Talks focused on energy .",
        "[[Moscow|moscow|russia]] did not comment .",
        "The visit lasted two days .",
        "[[McCain|mccain]] praised local reforms .",
        "Observers expect further meetings .",
        "[[United States|us|usa]] stays a partner of [[Georgia|georgia]] .",
    ]
    return NewsDocument(
        doc_id="mccain-georgia",
        title="[[McCain|mccain]]: [[USA|usa]] continue supporting [[Georgia|georgia]]",
        sentences=sentences,
    )


@pytest.fixture
def mixed_news(mccain_news):
    return mccain_news.model_copy(
        update={"doc_id": "mixed", "title": "[[McCain|mccain]]: [[USA|usa]] continue condemning [[Georgia|georgia]]"}
    )


@pytest.fixture(scope="session")
def small_bundle():
    config = GeneratorConfig(
        documents=30, main_documents=9, attitudes_per_document=2, sentences_min=2, sentences_max=4, d_word=8,
    )
    return generate_bundle(7, config)
