from .dsm import DsmFit, MatchSet, build_match_set, double_scores, dsm_fit, estimate_dsm, match_on_scores
from .pencomp import PencompConfig, estimate_pencomp, pencomp_replicates
from .tmle import TmleFit, estimate_tmle, tmle_targeting
from .weighting import (
    aiptw_point,
    aiptw_point_combined,
    estimate_aiptw,
    estimate_imp,
    estimate_iptw,
    imp_point,
    iptw_point,
)

__all__ = [
    "DsmFit", "MatchSet", "PencompConfig", "TmleFit", "aiptw_point", "aiptw_point_combined",
    "build_match_set", "double_scores", "dsm_fit", "estimate_aiptw", "estimate_dsm", "estimate_imp",
    "estimate_iptw", "estimate_pencomp", "estimate_tmle", "imp_point", "iptw_point", "match_on_scores",
    "pencomp_replicates", "tmle_targeting",
]
