"""
The inverse-Hessian estimate and when to trust it
=================================================

The classical influence-function recipe approximates deletion influence
with an inverse-Hessian-vector product (IHVP). For kernel ridge the
estimate has a closed form too, and so does its gap from the exact value:

    exact     I  = term1 + term2
    estimate  Ihat = (1 - A_i) * term1

where A_i is the model's self-influence at point i. Two consequences:

  * a spectral floor: the relative error can never drop below roughly
    lam_min / (lam_min + lam), no matter how small the regularizer, and
  * a density ceiling: points in well-sampled regions have small A_i,
    so their estimates are good.

This script measures both effects.
"""

import numpy as np

from ntk_influence import (
    BoundInputs,
    KernelCross,
    MixtureSpec,
    cross_many,
    density_upper_bound,
    fit,
    gamma_hat,
    generate_mixture,
    gram,
    influence_records,
    normalize_rows,
    spectral_ratio,
)

rng = np.random.default_rng(3)

# ---------------------------------------------------------------------------
# 1. The spectral floor: sweep the regularizer on one dataset and watch
#    the mean relative error of the IHVP estimate track the floor.
# ---------------------------------------------------------------------------
centers = normalize_rows(rng.standard_normal((2, 20)))
spec = MixtureSpec(centers, np.full(2, 0.3), np.array([0.5, 0.5]),
                   np.array([1.0, -1.0]))
train = generate_mixture(spec, 200, seed=10)
test = generate_mixture(spec, 10, seed=11)
kernel = gram(train)

print("lambda    mean error rate    spectral floor")
for lam in [2.0**k for k in range(-4, 5)]:
    model = fit(kernel, train.labels, lam)
    rates = []
    for t in range(test.n):
        cr = KernelCross(cross_many(train, test.inputs[t:t + 1])[0], test.inputs[t])
        for r in influence_records(model, cr, float(test.labels[t])):
            if np.isfinite(r.error_rate):
                rates.append(r.error_rate)
    print(f"{lam:7.4f}   {np.mean(rates):15.4f}   {spectral_ratio(model):14.4f}")

# Small lambda: the floor is near 1 and the estimate is badly off.
# Large lambda: the floor decays like lam_min / lam and the estimate tightens.

# ---------------------------------------------------------------------------
# 2. The density ceiling: on a tightly clustered dataset the gap
#    |I - Ihat| is bounded above by a quantity driven by 1 / sqrt(n^2 p_k),
#    where p_k is the mass of the cluster the training point lives in.
#    The bound needs the regularizer to clear a radius-dependent threshold.
# ---------------------------------------------------------------------------
k, d, radius = 4, 50, 1e-3
centers = normalize_rows(rng.standard_normal((k, d)))
counts = 50 * 2.0 ** np.arange(k)
spec = MixtureSpec(centers, np.full(k, radius), counts / counts.sum(),
                   np.array([1.0, -1.0, 1.0, -1.0]))
train = generate_mixture(spec, int(counts.sum()), seed=20)
test = generate_mixture(spec, 5, seed=21)
kernel = gram(train)

geometry = BoundInputs.from_radius(radius, kernel.lambda_max)
lam = 1.05 * geometry.lam_threshold
print(f"\nclustered set: n={train.n}, {k} clusters of radius {radius}")
print(f"kernel perturbation within a cluster: eps_r = {geometry.eps_r:.5f}")
print(f"regularizer threshold {geometry.lam_threshold:.3f}; using lam = {lam:.3f}")

model = fit(kernel, train.labels, lam)
gamma = gamma_hat(model)
mass = np.bincount(train.group_ids, minlength=k) / train.n

held = total = 0
worst_margin = np.inf
for t in range(test.n):
    cr = KernelCross(cross_many(train, test.inputs[t:t + 1])[0], test.inputs[t])
    for r in influence_records(model, cr, float(test.labels[t])):
        p_k = float(mass[train.group_ids[r.train_index]])
        bound = density_upper_bound(r, float(gamma[r.train_index]), p_k, train.n)
        gap = abs(r.i_ntk - r.i_hat)
        held += gap <= bound + 1e-12
        total += 1
        if bound > 0:
            worst_margin = min(worst_margin, bound - gap)

print(f"bound holds for {held}/{total} (test, train) pairs;"
      f" tightest margin {worst_margin:.3e}")
