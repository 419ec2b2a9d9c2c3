"""Build the difference matrix and a sampled prior grid for one distribution."""
import numpy as np

from lldg import difference_matrix, sample_prior_grid

np.set_printoptions(precision=3, suppress=True)

l = np.array([0.1, 0.2, 0.3, 0.4])
d = difference_matrix(l)
print("difference matrix (row i, column j holds l[j] - l[i]):")
print(d)

g = sample_prior_grid(d, seed=0).grid
print("\ngrid shape:", g.shape)
# c draws per entry, so the average only roughly tracks d
print("mean over draws:")
print(g.mean(axis=-1))
print("spread over draws (small where |d| is near 1):")
print(g.std(axis=-1))

# a one-hot distribution gives entries of magnitude 1, which carry no noise
hot = sample_prior_grid(difference_matrix(np.array([0.0, 1.0, 0.0, 0.0])), seed=0).grid
print("\none-hot grid, row 0 draws:", hot[0, 1])
