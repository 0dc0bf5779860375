"""
Files, reproducibility, and the command line
============================================

Everything the library computes can round-trip through files: datasets as
JSON, influence records as CSV, models and networks as small binary
checkpoints. On top of that sits a command line that runs named,
seed-deterministic experiments -- same seed, byte-identical results.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from ntk_influence import (
    KernelCross,
    MixtureSpec,
    cross_many,
    fit,
    generate_mixture,
    gram,
    influence_records,
    init_network,
    normalize_rows,
)
from ntk_influence.datasets import load_dataset_json, save_dataset
from ntk_influence.influence import records_from_csv, records_to_csv
from ntk_influence.network import load_network, save_network
from ntk_influence.ridge import load_model, save_model

work = Path(tempfile.mkdtemp(prefix="ntk-demo-"))
print(f"scratch directory: {work}")

rng = np.random.default_rng(21)
centers = normalize_rows(rng.standard_normal((2, 10)))
spec = MixtureSpec(centers, np.full(2, 0.3), np.array([0.5, 0.5]),
                   np.array([1.0, -1.0]))
data = generate_mixture(spec, 50, seed=70)

# ---------------------------------------------------------------------------
# 1. Datasets round-trip through JSON, byte for byte on the float values.
# ---------------------------------------------------------------------------
save_dataset(work / "data.json", data)
back = load_dataset_json(work / "data.json")
print("dataset JSON round trip exact:",
      np.array_equal(back.inputs, data.inputs) and np.array_equal(back.labels, data.labels))

# ---------------------------------------------------------------------------
# 2. Models and networks checkpoint to compact binary files. Loading a
#    model re-verifies it against the kernel it claims to belong to.
# ---------------------------------------------------------------------------
kernel = gram(data)
model = fit(kernel, data.labels, 0.8)
save_model(work / "model.bin", model)
restored = load_model(work / "model.bin", kernel)
print("model checkpoint restores beta exactly:",
      np.array_equal(restored.beta, model.beta))

net = init_network(m=500, d=data.dim, kappa=0.01, seed=71)
save_network(work / "net.bin", net)
print("network checkpoint restores weights exactly:",
      np.array_equal(load_network(work / "net.bin").weights, net.weights))

# ---------------------------------------------------------------------------
# 3. Influence records go to CSV with exact float formatting (repr), so
#    what you read back is what was computed.
# ---------------------------------------------------------------------------
x_te = generate_mixture(spec, 2, seed=72).inputs[0]
cr = KernelCross(cross_many(data, x_te[None, :])[0], x_te)
records = influence_records(model, cr, y_test=1.0)
records_to_csv(work / "records.csv", records)
again = records_from_csv(work / "records.csv")
print("records CSV round trip exact:",
      all(a == b for a, b in zip(records, again)))

# ---------------------------------------------------------------------------
# 4. The command line. Three verbs: list-experiments, validate, run.
#    Runs are deterministic in the seed -- rerunning writes byte-identical
#    results.csv.
# ---------------------------------------------------------------------------
cli = [sys.executable, "-m", "ntk_influence.cli"]
print("\n$ ntk-influence list-experiments")
print(subprocess.run(cli + ["list-experiments"], capture_output=True,
                     text=True).stdout)

args = ["run", "fig4_rankings", "--seed", "7",
        "--set", "n_train=40", "--set", "n_test=4", "--set", "dim=8"]
out_a, out_b = work / "a", work / "b"
for out in (out_a, out_b):
    res = subprocess.run(cli + args + ["--out", str(out)],
                         capture_output=True, text=True)
    print(f"$ ntk-influence {' '.join(args)} --out {out}")
    print(res.stdout.strip().splitlines()[0])

same = (out_a / "fig4_rankings/results.csv").read_bytes() == \
       (out_b / "fig4_rankings/results.csv").read_bytes()
print("\nsame seed -> byte-identical results.csv:", same)

manifest = json.loads((out_a / "fig4_rankings/manifest.json").read_text())
print("manifest records:", ", ".join(sorted(manifest)))
