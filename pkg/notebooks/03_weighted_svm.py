"""
Instance-weighted SVM
=====================

SMO on a precomputed kernel, with a per-sample cap beta_i * C on each multiplier.
"""

# %%
import numpy as np

from tsk import SvmTrainConfig, train_weighted_svm
from tsk.wsvm import decision_scores_from_kernel, dual_objective

# two orthogonal points: the hard-margin solution is alpha = (1, 1), b = 0
model = train_weighted_svm(np.eye(2), [1, -1], None, SvmTrainConfig(C=1e6))
print("alphas:", model.alphas, "b:", round(model.b, 12))
print("scores:", decision_scores_from_kernel(model, np.eye(2)))

# %% [markdown]
# A zero weight removes a sample from training entirely.

# %%
rng = np.random.default_rng(2)
X = rng.normal(size=(30, 2))
y = np.where(X[:, 0] + 0.3 * rng.normal(size=30) > 0, 1.0, -1.0)
K = np.exp(-((X[:, None] - X[None]) ** 2).sum(-1))
beta = np.ones(30)
beta[:5] = 0.0
weighted = train_weighted_svm(K, y, beta, SvmTrainConfig(C=1.0))
dropped = train_weighted_svm(K[5:, 5:], y[5:], None, SvmTrainConfig(C=1.0))
print("alphas of excluded samples:", weighted.alphas[:5])
print("max score difference vs. dropping them:",
      np.abs(decision_scores_from_kernel(weighted, K)
             - decision_scores_from_kernel(dropped, K[5:, :])).max())

# %%
print(f"dual objective {dual_objective(weighted.alphas, y, K):.6f}, "
      f"support vectors {weighted.support.size}, worst KKT violation {weighted.kkt_violation:.1e}")
