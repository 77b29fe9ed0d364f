"""Word-order informativeness toolkit.

Measures how much information word order carries by pairing sentences with
seeded scrambles, scoring the original order's recoverability with a
normalized reordering distribution against a smoothed language model
(pointwise MI in bits), and relating that quantity to classifier
prediction consistency with a Bayesian mixed-effects logistic regression.
"""

from .cfgbench import AccuracyReport, GeneratedSet, Grammar, builtin_grammar, generate
from .consistency import ConsistencyRecord, PredictionRecord, build_dataset
from .errors import ConvergenceError, DataError, OrdinfoError, ScorerError
from .infometrics import (
    MiEstimate,
    PmiRecord,
    ProbeScores,
    avg_pmi,
    control_accuracy,
    length_pmi_correlation,
    levenshtein,
    mi_bound,
    pmi,
    probe_accuracy,
)
from .ngram_lm import EOS, UNK, NgramModel, train
from .regression import (
    DesignMatrix,
    MixedModelSpec,
    PosteriorDraws,
    compare,
    fit,
    rope,
    simulate_curves,
    standardize,
    summarize,
)
from .reorder import Derivation, ReorderModel, decode, fit_temperature, q_logp
from .scorer_bridge import Providers, ScorerConfig, fallback_resolve, open_scorer
from .textdata import (
    CorpusStats,
    ScramblePair,
    SentenceRecord,
    corpus_stats,
    make_scramble_set,
    scramble,
    tokenize,
)

__version__ = "0.1.0"
