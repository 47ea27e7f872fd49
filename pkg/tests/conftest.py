"""Shared small fixtures for the unit tests.

The heavyweight synthetic-corpus fixtures used by the acceptance suite live
in tests/deskcorpus.py and are built lazily (session-scoped) where needed.
"""

from __future__ import annotations

import numpy as np
import pytest

from biastrace.cooc import CoocMatrix
from biastrace.corpus import Corpus, Document, Vocabulary
from biastrace.glove import GloveModel, Hyperparams
from biastrace.metrics import WeatSpec


def make_corpus(token_lists, path="<memory>"):
    docs = tuple(
        Document(i, tuple(toks), (0, 0)) for i, toks in enumerate(token_lists)
    )
    return Corpus(docs, path)


def make_vocab(words):
    return Vocabulary(tuple(words), tuple([1] * len(words)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_spec():
    return WeatSpec(
        name="toy",
        S=("physics", "chemistry"),
        T=("poetry", "dance"),
        A=("he", "him"),
        B=("she", "her"),
    )


@pytest.fixture
def small_embedding(rng, small_spec):
    """A 10-word embedding with planted structure: S words lean towards A
    words, T words towards B words, plus two uninvolved filler words."""
    words = list(small_spec.all_words()) + ["rock", "tree"]
    vocab = Vocabulary(tuple(words), tuple([5] * len(words)))
    D = 6
    w = rng.normal(size=(len(words), D))
    axis = rng.normal(size=D)
    axis /= np.linalg.norm(axis)
    for word in small_spec.S + small_spec.A:
        w[vocab.id_of(word)] += 0.8 * axis
    for word in small_spec.T + small_spec.B:
        w[vocab.id_of(word)] -= 0.8 * axis
    return w, vocab, small_spec.resolve(vocab)


def random_cooc(rng, V, density=0.3, low=0.5, high=50.0):
    """A random symmetric co-occurrence matrix on V words."""
    entries = {}
    for i in range(V):
        for j in range(i + 1, V):
            if rng.random() < density:
                x = float(rng.uniform(low, high))
                entries[(i, j)] = x
                entries[(j, i)] = x
    return CoocMatrix.from_dict(V, entries)


def random_model(rng, V, D, hyper=None, scale=0.5):
    hyper = hyper or Hyperparams(D=D, epochs=1)
    return GloveModel(
        w=rng.normal(scale=scale, size=(V, D)),
        u=rng.normal(scale=scale, size=(V, D)),
        b=rng.normal(scale=0.1, size=V),
        c=rng.normal(scale=0.1, size=V),
        hyper=hyper,
        vocab_hash="",
    )
