"""
Exact deletion influence, in closed form
========================================

The influence of a training point on a test prediction is usually defined
by a counterfactual: refit the model without that point and see how the
test loss moves. For kernel ridge regression the counterfactual has a
closed form -- a rank-one leave-one-out update -- so we can compute the
exact influence of every training point without ever refitting.

This script builds a small two-cluster problem, fits the kernel ridge
model, and checks the closed form against brute-force refits.
"""

import numpy as np

from ntk_influence import (
    KernelCross,
    MixtureSpec,
    cross_many,
    fit,
    generate_mixture,
    gram,
    influence_exact,
    influence_records,
    normalize_rows,
    predict,
)

# ---------------------------------------------------------------------------
# 1. A small problem: two clusters on the unit sphere, one per label.
# ---------------------------------------------------------------------------
rng = np.random.default_rng(0)
centers = normalize_rows(rng.standard_normal((2, 12)))
spec = MixtureSpec(centers, radii=np.full(2, 0.3),
                   proportions=np.array([0.5, 0.5]),
                   labels_per_cluster=np.array([1.0, -1.0]))
train = generate_mixture(spec, 60, seed=1)
test = generate_mixture(spec, 2, seed=2)
x_te, y_te = test.inputs[0], float(test.labels[0])

print(f"training points: {train.n}   dimension: {train.dim}")

# ---------------------------------------------------------------------------
# 2. Fit kernel ridge under the closed-form kernel of a wide two-layer
#    ReLU network. The Gram matrix depends only on pairwise inner products.
# ---------------------------------------------------------------------------
lam = 0.5
kernel = gram(train)
model = fit(kernel, train.labels, lam)
cr = KernelCross(cross_many(train, x_te[None, :])[0], x_te)
print(f"prediction at the test point: {predict(model, cr):+.4f}   label: {y_te:+.0f}")

# ---------------------------------------------------------------------------
# 3. Influence of every training point on the test loss, exactly.
#    influence_records evaluates all n deletions through the rank-one
#    leave-one-out identity -- no refits.
# ---------------------------------------------------------------------------
records = influence_records(model, cr, y_te)
by_value = sorted(records, key=lambda r: r.i_ntk)

print("\nmost harmful points (deleting them lowers the test loss the most):")
for r in by_value[:3]:
    print(f"  train point {r.train_index:3d}   influence {r.i_ntk:+.5f}")
print("most helpful points (deleting them raises the test loss the most):")
for r in by_value[-3:]:
    print(f"  train point {r.train_index:3d}   influence {r.i_ntk:+.5f}")

# ---------------------------------------------------------------------------
# 4. Trust, but verify: refit without each of five points and compare.
#    The refit model uses the principal submatrix of the same Gram matrix,
#    so the only difference is the deleted row.
# ---------------------------------------------------------------------------
print("\nclosed form vs actual refit:")
for i in [0, 7, 19, 33, 59]:
    keep = np.concatenate([np.arange(i), np.arange(i + 1, train.n)])
    refit = fit(kernel.submatrix(keep), train.labels[keep], lam)
    f_without = predict(refit, KernelCross(cr.values[keep], x_te))
    f_with = predict(model, cr)
    brute = 0.5 * (f_without - y_te) ** 2 - 0.5 * (f_with - y_te) ** 2
    closed = influence_exact(model, cr, y_te, i)
    print(f"  delete {i:3d}: refit {brute:+.10f}   closed form {closed:+.10f}"
          f"   gap {abs(brute - closed):.2e}")

# The gaps above are at float precision: the closed form *is* the refit.
