"""Unpaired domain translation with two normalizing flows sharing one latent space."""

from .checkpoint import load_checkpoint, save_checkpoint
from .domains import DomainPairSpec, PairedSet, generate
from .evaluation import evaluate, histogram_kl, marginal_consistency_check, permutation_nonidentifiability_demo
from .flows import FlowSpec, build_flow
from .model import AlignFlowModel, SharingSpec
from .objectives import Critic, HybridObjectiveConfig, alignflow_objective
from .training import TrainConfig, make_critics, train

__version__ = "0.1.0"

__all__ = [
    "AlignFlowModel",
    "AlignFlowTranslator",
    "Critic",
    "DomainPairSpec",
    "FlowSpec",
    "HybridObjectiveConfig",
    "PairedSet",
    "SharingSpec",
    "TrainConfig",
    "alignflow_objective",
    "build_flow",
    "evaluate",
    "generate",
    "histogram_kl",
    "load_checkpoint",
    "make_critics",
    "marginal_consistency_check",
    "permutation_nonidentifiability_demo",
    "save_checkpoint",
    "train",
]


def __getattr__(name):
    # the estimator pulls in scikit-learn, so load it on first use
    if name == "AlignFlowTranslator":
        from .estimator import AlignFlowTranslator

        return AlignFlowTranslator
    raise AttributeError(name)
