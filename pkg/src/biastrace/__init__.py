"""Corpus-to-bias attribution for GloVe word embeddings.

Train GloVe embeddings from raw text, measure WEAT-style bias, and estimate
for every training document how much its removal would change that bias,
using a block-diagonal influence-function approximation.  A retraining
harness validates the approximation end to end.
"""

from biastrace.corpus import Corpus, Document, Vocabulary, load_corpus, build_vocabulary, tokenize
from biastrace.cooc import CoocDelta, CoocMatrix, apply_removal, doc_cooc_rows, extract_cooc
from biastrace.glove import GloveModel, Hyperparams, train, loss, weight_f
from biastrace.metrics import WeatSpec, cosine, weat_assoc, weat_effect_size, weat_gradient, projection_bias

__all__ = [
    "Corpus",
    "Document",
    "Vocabulary",
    "load_corpus",
    "build_vocabulary",
    "tokenize",
    "CoocMatrix",
    "CoocDelta",
    "extract_cooc",
    "doc_cooc_rows",
    "apply_removal",
    "GloveModel",
    "Hyperparams",
    "train",
    "loss",
    "weight_f",
    "WeatSpec",
    "cosine",
    "weat_assoc",
    "weat_effect_size",
    "weat_gradient",
    "projection_bias",
]
