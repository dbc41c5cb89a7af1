"""Candidate screening with finite-sample false discovery rate control.

The package screens a pool of labeled and unlabeled candidates one at a time
under a strict information-disclosure protocol, stops once a running
false-discovery estimate reaches the target level, and returns the surviving
unlabeled candidates.  Ordering decisions are pluggable (model refits,
cross-validated model selection, diversity-aware scoring, label-augmented
refits) and may change mid-run without voiding the guarantee.
"""

from .conformal import CalibrationRecord, bh, conformal_pvalues, cs_screen, cs_select
from .data import (
    CsvSchema,
    DataError,
    Dataset,
    PropertySet,
    Sample,
    SimConfig,
    SimilarityKernel,
    generate,
    ingest_csv,
    is_null,
    quantile_thresholds,
    similarity,
)
from .diversity import build_theta, closed_form_xi, qp_xi, softmax, working_rule
from .engine import (
    EngineError,
    FiltrationView,
    ScreeningState,
    check_stop,
    fdp_estimate,
    init,
    oracle_martingale,
    reveal_label,
    run,
    screen_next,
    visible,
)
from .learners import LearnerSpec, Predictor, TrainingExample, fit, parse_learner, roc_auc, score
from .policies import PolicyConfig, make_policy, naive_select, parse_policy
from .results import AuditEvent, SelectionResult

__version__ = "0.1.0"
