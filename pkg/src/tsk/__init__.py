"""Transfer string kernels: mismatch string kernels, kernel mean matching and
instance-weighted SVMs for cross-context sequence classification."""

from .evaluation import EvalReport, conservation_score, roc_auc
from .kmm import BetaWeights, KmmConfig, kmm_objective, solve_beta
from .pipeline import Grid, GridSearchRecord, fit_tsk, grid_search
from .seqdata import DNA, PROTEIN, Alphabet, LabeledDataset, Sequence, load_labeled_dataset, parse_fasta
from .stringkernel import (GramMatrix, KappaVector, KernelParams, gram_matrix, kappa_vector,
                           kmer_counts, mismatch_kernel, mismatch_neighborhood, spectrum_kernel)
from .wsvm import SvmModel, SvmTrainConfig, decision_score, predict_batch, train_weighted_svm

__version__ = "0.1.0"
