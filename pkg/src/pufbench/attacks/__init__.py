from .cmaes import CmaesConfig, EsCandidate, cmaes_reliability_attack, converged_members
from .common import AttackReport, evaluate_accuracy, is_converged, pearson
from .hybrid import HybridConfig, hybrid_attack, hybrid_loss
from .lr import LrConfig, lr_attack
from .mlp import MlpConfig, MlpModel, mlp_attack
from .soft import SoftOaxModel, lr_loss, soft_response_probability

__all__ = [
    "AttackReport", "CmaesConfig", "EsCandidate", "HybridConfig", "LrConfig", "MlpConfig", "MlpModel",
    "SoftOaxModel", "cmaes_reliability_attack", "converged_members", "evaluate_accuracy", "hybrid_attack",
    "hybrid_loss", "is_converged", "lr_attack", "lr_loss", "mlp_attack", "pearson", "soft_response_probability",
]
