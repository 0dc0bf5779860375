"""
From kernels to actual networks
===============================

The kernel used everywhere else in this package is the infinite-width
limit of a two-layer ReLU network trained lazily. This script closes the
loop on real, finite networks, using a binary digit-classification task
(7 vs 9 from the scikit-learn digits set):

  1. the network's empirical tangent kernel approaches the closed form
     as width grows;
  2. kernel influences predict what actually happens when you retrain a
     trained network without a point -- the ground truth that needs one
     full training run per deleted point;
  3. training barely moves the weights, and moves them less the wider
     the network: the lazy regime where the kernel picture is exact.

Runs in well under a minute.
"""

import numpy as np
from sklearn.datasets import load_digits

from ntk_influence import (
    Dataset,
    KernelCross,
    TrainConfig,
    cross_many,
    empirical_kernel,
    fit,
    gram,
    influence_records,
    init_network,
    normalize_rows,
    pearson_r,
    retrain_influences,
    spearman_rho,
    top_k_by_magnitude,
    train,
)

# ---------------------------------------------------------------------------
# 0. Data: 8x8 digit images of 7s and 9s, rows normalized to the unit
#    sphere (the kernel's domain), labels +-1.
# ---------------------------------------------------------------------------
bunch = load_digits()
keep = (bunch.target == 7) | (bunch.target == 9)
x = bunch.data[keep].astype(np.float64)
y = np.where(bunch.target[keep] == 7, 1.0, -1.0)
order = np.random.default_rng(0).permutation(x.shape[0])
data = Dataset(normalize_rows(x[order[:150]]), y[order[:150]])
x_te, y_te = normalize_rows(x[order[150:151]])[0], float(y[order[150]])
print(f"training points: {data.n}   dimension: {data.dim}")

# ---------------------------------------------------------------------------
# 1. Width convergence of the empirical tangent kernel. At initialization
#    the network's tangent kernel is a Monte Carlo estimate of the closed
#    form, with error shrinking like 1/sqrt(width).
# ---------------------------------------------------------------------------
exact = gram(data).values
print("\nwidth    max |K_width - K_exact|")
for m in (100, 1000, 10000):
    net = init_network(m, data.dim, kappa=1.0, seed=40)
    emp = empirical_kernel(net, data).values
    print(f"{m:6d}   {np.max(np.abs(emp - exact)):.4f}")

# ---------------------------------------------------------------------------
# 2. Ground-truth retraining. Train a width-800 network on all 150 points,
#    then retrain without each of the 10 most influential points (same
#    initialization, so the deleted point is the only difference) and
#    compare the measured test-loss change to the kernel's exact influence.
#    The network is trained on the anchored ridge objective, matching the
#    kernel model's regularizer.
# ---------------------------------------------------------------------------
lam = 4.0
model = fit(gram(data), data.labels, lam)
cr = KernelCross(cross_many(data, x_te[None, :])[0], x_te)
top = top_k_by_magnitude(influence_records(model, cr, y_te), 10)
idx = np.array([r.train_index for r in top])
kernel_infl = np.array([r.i_ntk for r in top])

config = TrainConfig(learning_rate=1e-3, epochs=300, lam=lam)
nn_infl = retrain_influences(data, idx, x_te, y_te,
                             net_seed=41, m=800, kappa=0.01, config=config)

print("\ntrain point    kernel influence    network retraining")
for j, i in enumerate(idx):
    print(f"{i:11d}    {kernel_infl[j]:+15.6f}    {nn_infl[j]:+15.6f}")
print(f"\nacross the 10 points: Pearson {pearson_r(kernel_infl, nn_infl):.4f},"
      f" Spearman {spearman_rho(kernel_infl, nn_infl):.4f}")

# ---------------------------------------------------------------------------
# 3. Why this works: training stays lazy, and gets lazier with width.
#    Each hidden unit ends up very close to where it started -- the regime
#    where the tangent kernel is frozen and the kernel model is the right
#    description.
# ---------------------------------------------------------------------------
print("\nwidth    final loss    largest per-unit weight movement")
for m in (500, 8000):
    trained, losses = train(init_network(m, data.dim, kappa=0.01, seed=41),
                            data, config)
    print(f"{m:6d}    {losses[-1]:10.4f}    {trained.max_weight_drift():.6f}")
