"""Problem builders, data generators and reference oracles for the four
experiment families: non-negative least squares, kernel SVM duals, regularized
joint probability estimation and fairness-constrained logistic regression."""

from .fairness import (
    ConstraintLoss,
    FairnessInstance,
    build_fair_logreg,
    gen_fairness,
    load_fairness_csv,
    logistic_loss,
)
from .jointprob import (
    JointProbInstance,
    Regularizer,
    build_joint_prob,
    gaussian_mixture_marginals,
    gen_joint_prob,
    joint_prob_objective,
)
from .nnls import NnlsInstance, build_nnls, gen_nnls
from .oracles import ConvergenceError, projected_gradient, sinkhorn, svm_dual_oracle
from .svm import SvmInstance, build_dual_svm, gen_svm_blobs, rbf_kernel

__all__ = [
    "ConstraintLoss",
    "ConvergenceError",
    "FairnessInstance",
    "JointProbInstance",
    "NnlsInstance",
    "Regularizer",
    "SvmInstance",
    "build_dual_svm",
    "build_fair_logreg",
    "build_joint_prob",
    "build_nnls",
    "gaussian_mixture_marginals",
    "gen_fairness",
    "gen_joint_prob",
    "gen_nnls",
    "gen_svm_blobs",
    "joint_prob_objective",
    "load_fairness_csv",
    "logistic_loss",
    "projected_gradient",
    "rbf_kernel",
    "sinkhorn",
    "svm_dual_oracle",
]
