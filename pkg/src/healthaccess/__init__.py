"""County-level analytics of perceived health resource accessibility from
geo-tagged review corpora: ontology filtering, pluggable three-class
labeling, perception scoring, spatial autocorrelation, and SIMPLS partial
least squares with permutation inference."""

from .classify import EvalReport, Label, LabeledReview, LexiconClassifier, evaluate
from .ingest import (DEFAULT_PERIODS, County, CountyIndex, Period, Review,
                     SurveySeries, assign_period, parse_counties,
                     parse_reviews, parse_survey)
from .ontology import KeywordOntology, default_ontology, filter_corpus, matches
from .pls import PlsFit, SimplsRegressor, permutation_inference, select_components, simpls_fit
from .score import PerceptionScore, aggregate_scores, national_trend, score_delta
from .spatial import MoranResult, SpatialWeights, build_weights, lattice_weights, morans_i
from .stats import (DataMatrix, cooks_distance, ols, pearson, t_two_sided_p,
                    validate_against_survey, vif, zscore)

__version__ = "0.1.0"

__all__ = [
    "Label", "LabeledReview", "LexiconClassifier", "EvalReport", "evaluate",
    "Review", "Period", "County", "CountyIndex", "SurveySeries",
    "DEFAULT_PERIODS", "parse_reviews", "parse_counties", "parse_survey",
    "assign_period", "KeywordOntology", "default_ontology", "matches",
    "filter_corpus", "PerceptionScore", "aggregate_scores", "score_delta",
    "national_trend", "SpatialWeights", "MoranResult", "build_weights",
    "lattice_weights", "morans_i", "DataMatrix", "zscore", "ols", "vif",
    "cooks_distance", "pearson", "t_two_sided_p", "validate_against_survey",
    "SimplsRegressor", "simpls_fit", "permutation_inference",
    "select_components", "PlsFit",
]
