"""Adversarial training of norm-constrained ReLU networks with certified risk brackets."""

from .attacks import AttackConfig, AttackResult, Cover, build_cover, certified_gap, run_attack
from .data import Dataset, HolderTarget, PosteriorSpec, make_holder_target, sample_classification, sample_regression
from .losses import LossSpec, hinge, loss_eval, quadratic, rho_margin, zero_one
from .nn import Architecture, NetworkParams, NormBudget, backward, forward, kappa, project_kappa
from .risk import RiskReport, sandwich
from .train import TrainConfig, adv_train

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackResult",
    "Cover",
    "build_cover",
    "certified_gap",
    "run_attack",
    "Dataset",
    "HolderTarget",
    "PosteriorSpec",
    "make_holder_target",
    "sample_classification",
    "sample_regression",
    "LossSpec",
    "hinge",
    "loss_eval",
    "quadratic",
    "rho_margin",
    "zero_one",
    "Architecture",
    "NetworkParams",
    "NormBudget",
    "backward",
    "forward",
    "kappa",
    "project_kappa",
    "RiskReport",
    "sandwich",
    "TrainConfig",
    "adv_train",
]
