"""
Kernels, determinants and what they say about baskets
=====================================================

A basket's score is the determinant of a small kernel submatrix.  Items with
similar latent vectors repel each other, so baskets of near-duplicates score
low and baskets of complementary items score high.

Run:  python demos/01_kernels_and_determinants.py
"""

import numpy as np

from basketdpp import FactorizedKernel, LogisticDppModel, build_submatrix, success_probability_logistic

# four items in a 2-d latent space: 0 and 1 almost identical, 2 orthogonal, 3 tiny
V = np.array([[1.0, 0.0], [0.95, 0.05], [0.0, 1.0], [0.1, 0.1]])
D = np.full(4, 0.1)
kernel = FactorizedKernel(V, D)

print("full kernel L = V V^T + diag(D^2):")
print(build_submatrix(kernel, range(4)).round(3))

# the determinant of a 2x2 block is the squared area spanned by the two rows
for pair in ([0, 1], [0, 2], [0, 3]):
    L = build_submatrix(kernel, pair)
    print(f"items {pair}: det = {np.linalg.det(L):.4f}")

# the link turns a determinant into a purchase probability
model = LogisticDppModel(V, D, w=0.5)
for basket in ([0, 1], [0, 2], [0, 1, 2]):
    print(f"P(basket {basket}) = {success_probability_logistic(model, basket):.4f}")

# per-task kernels rescale the latent dimensions: a task that only cares about
# the second dimension sees items 0 and 1 as nearly irrelevant
R_task = np.array([0.1, 1.0])
print("task kernel on {0, 1, 2}:")
print(build_submatrix(FactorizedKernel(V, D, R_task), [0, 1, 2]).round(3))
