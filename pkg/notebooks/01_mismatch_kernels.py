"""
Mismatch string kernels
=======================

k-mer spectra, the (k, m)-mismatch kernel and the Gram matrices built from them.
"""

# %%
import numpy as np

from tsk import DNA, KernelParams, Sequence, gram_matrix
from tsk.stringkernel import (ball_size, intersection_coefficients, kmer_counts,
                              mismatch_kernel, mismatch_kernel_bruteforce, mismatch_kernel_raw,
                              spectrum_kernel)

x = Sequence.from_string("x", "ATATGCA")
y = Sequence.from_string("y", "TATGGCA")

# %% [markdown]
# The spectrum of a sequence is its k-mer count table.

# %%
counts = kmer_counts(x, 2)
print({DNA.decode(km): c for km, c in sorted(counts.items())})
print("spectrum kernel k=2:", spectrum_kernel(x, y, 2))

# %% [markdown]
# With m mismatches every k-mer also votes for its Hamming-ball neighbours.
# A k-mer pair at distance q shares I(q) neighbours, so the kernel is a sum
# of I(q) over all window pairs instead of an explicit expansion.

# %%
k, m = 3, 1
print("ball size:", ball_size(k, m, DNA.size))
print("I(q), q = 0..k:", intersection_coefficients(k, m, DNA.size))
p = KernelParams(k, m, normalize=False)
print("by expansion:", mismatch_kernel_bruteforce(x, y, p),
      " by I(q):", mismatch_kernel_raw(x, y, p))
print("normalized:", round(mismatch_kernel(x, y, KernelParams(k, m)), 6))

# %% [markdown]
# Gram matrices over a set of random sequences are symmetric PSD and,
# once normalized, have a unit diagonal.

# %%
rng = np.random.default_rng(0)
seqs = [Sequence(f"s{i}", rng.integers(0, 4, 40).astype(np.int8)) for i in range(25)]
G = gram_matrix(seqs, KernelParams(5, 1), jobs=2)
ev = np.linalg.eigvalsh(G.values)
print(f"n={G.n}  diag range [{G.values.diagonal().min():.3f}, {G.values.diagonal().max():.3f}]"
      f"  eigenvalues [{ev.min():.2e}, {ev.max():.2f}]")
