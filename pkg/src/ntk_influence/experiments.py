"""Named experiment pipelines behind the command line.

Each experiment resolves a dataset, runs one analysis end to end, and
writes results.csv (plus any extra files) and manifest.json into its output
directory. Reruns with the same seed produce byte-identical results.csv.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, matio
from .complexity import group_complexity, report_to_csv
from .datasets import (
    Dataset,
    MixtureSpec,
    flip_labels,
    generate_mixture,
    kde_density,
    load_dataset,
    normalize_rows,
)
from .dynamics import track_top_influencers, trace_to_csv
from .errors import ParameterError
from .influence import (
    BoundInputs,
    density_upper_bound,
    gamma_hat,
    influence_records,
    spectral_ratio,
)
from .kernel import KernelCross, cross_many, gram
from .network import TrainConfig, retrain_influences
from .ridge import fit
from .stats import correlation_summary, spearman_rho, top_k_by_magnitude

DEFAULT_LAMBDA_GRID = tuple(2.0**k for k in range(-4, 5))


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings for one experiment run.

    Flat key = value pairs; list-valued fields are comma-separated in config
    files. Fields irrelevant to a given experiment are ignored by it.
    """

    experiment: str = ""
    seed: int = 0
    out_dir: str = "results"
    threads: int = 0
    # dataset selection
    dataset: str = "mixture"  # mixture | digits | csv | idx
    data_path: str = ""
    labels_path: str = ""
    class_a: float = 7.0
    class_b: float = 9.0
    n_train: int = 200
    n_test: int = 50
    # mixture geometry
    n_clusters: int = 2
    dim: int = 20
    radius: float = 0.3
    proportions: tuple[float, ...] = ()
    base_count: int = 50
    count_growth: float = 2.0
    # model
    lam: float = 1.0
    lam_margin: float = 1.05
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    # network protocol
    width: int = 10000
    widths: tuple[int, ...] = (10000, 20000, 40000, 80000)
    seeds: tuple[int, ...] = (0,)
    learning_rate: float = 1e-3
    epochs: int = 5000
    kappa: float = 0.01
    # analysis knobs
    top_k: int = 40
    n_groups: int = 10
    flip_fraction: float = 0.0
    n_times: int = 40
    t_min: float = 0.1
    t_max: float = 1e4

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.lam)


# fields forced per experiment unless the user sets them explicitly
_EXPERIMENT_DEFAULTS: dict[str, dict] = {
    "fig1_scatter": {"dataset": "digits", "lam": 4.0},
    "table1_widths": {"dataset": "digits", "lam": 4.0, "seeds": (0, 1, 2)},
    "fig2_lambda_sweep": {"proportions": (0.5, 0.5)},
    "fig3_density": {"proportions": (0.9, 0.1)},
    "fig4_rankings": {},
    "fig5_complexity": {},
    "fig6_tracking": {},
    "fig7_label_noise": {"flip_fraction": 0.4},
    "thm4_bound": {"n_clusters": 5, "dim": 100, "radius": 1e-3, "lam": 0.0, "n_test": 20},
}

EXPERIMENTS: dict[str, str] = {
    "fig1_scatter": "exact vs retrained influence for the most influential points",
    "table1_widths": "influence agreement R across network widths and seeds",
    "fig2_lambda_sweep": "IHVP error rate and its spectral floor across lambda",
    "fig3_density": "sampling density against IHVP error rate",
    "fig4_rankings": "most helpful / harmful / neutral points per test point",
    "fig5_complexity": "complexity contribution of influence-ranked groups",
    "fig6_tracking": "top influencer of each test point across training time",
    "fig7_label_noise": "share of noisy top influencers across training time",
    "thm4_bound": "density upper bound coverage on a clustered mixture",
}


def subseed(seed: int, tag: str) -> int:
    """Stable derived seed for one named random stream."""
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _mixture_spec(cfg: ExperimentConfig, seed: int) -> MixtureSpec:
    k = cfg.n_clusters
    if cfg.proportions:
        props = np.asarray(cfg.proportions, dtype=np.float64)
        if props.size != k:
            raise ParameterError(
                f"{props.size} proportions for n_clusters={k}"
            )
    else:
        counts = cfg.base_count * cfg.count_growth ** np.arange(k)
        props = counts / counts.sum()
    rng = np.random.default_rng(subseed(seed, "centers"))
    centers = normalize_rows(rng.standard_normal((k, cfg.dim)))
    labels = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(k)])
    return MixtureSpec(centers, np.full(k, cfg.radius), props, labels)


def _split_indices(n: int, n_train: int, n_test: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng(subseed(seed, "split")).permutation(n)
    n_train = min(n_train, n - 1)
    n_test = min(n_test, n - n_train)
    if n_train < 1 or n_test < 1:
        raise ParameterError(f"cannot split n={n} into {n_train} train / {n_test} test")
    return order[:n_train], order[n_train : n_train + n_test]


def _load_digits_pair(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    from sklearn.datasets import load_digits

    bunch = load_digits()
    keep = (bunch.target == int(cfg.class_a)) | (bunch.target == int(cfg.class_b))
    x = bunch.data[keep]
    y = np.where(bunch.target[keep] == int(cfg.class_a), 1.0, -1.0)
    return x, y


def resolve_data(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """(training set, test inputs, test labels) for the configured source."""
    if cfg.dataset == "mixture":
        spec = _mixture_spec(cfg, seed)
        train = generate_mixture(spec, cfg.n_train, subseed(seed, "train"))
        test = generate_mixture(spec, cfg.n_test, subseed(seed, "test"))
        return train, test.inputs, test.labels
    if cfg.dataset == "digits":
        x, y = _load_digits_pair(cfg)
    elif cfg.dataset in ("csv", "idx"):
        if not cfg.data_path:
            raise ParameterError(f"dataset={cfg.dataset!r} requires data_path")
        loaded = load_dataset(
            cfg.data_path,
            format=cfg.dataset,
            class_filter=(cfg.class_a, cfg.class_b) if cfg.dataset == "idx" else None,
            labels_path=cfg.labels_path or None,
        )
        x, y = loaded.inputs, loaded.labels
    else:
        raise ParameterError(f"unknown dataset {cfg.dataset!r}")
    tr, te = _split_indices(x.shape[0], cfg.n_train, cfg.n_test, seed)
    train = Dataset(normalize_rows(x[tr]), y[tr])
    return train, normalize_rows(x[te]), y[te]


def _fit_on(train: Dataset, lam: float):
    kernel = gram(train)
    return kernel, fit(kernel, train.labels, lam)


def _records_for_tests(model, train, test_x, test_y):
    """Influence records for every (test point, training point) pair."""
    blocks = cross_many(train, test_x)
    out = []
    for t in range(test_x.shape[0]):
        cr = KernelCross(blocks[t], test_x[t])
        out.append(influence_records(model, cr, float(test_y[t]), test_id=t))
    return out


def run_fig1_scatter(cfg: ExperimentConfig, out: Path) -> dict:
    train, test_x, test_y = resolve_data(cfg, cfg.seed)
    _, model = _fit_on(train, cfg.lam)
    cr = KernelCross(cross_many(train, test_x[:1])[0], test_x[0])
    records = influence_records(model, cr, float(test_y[0]), test_id=0)
    top = top_k_by_magnitude(records, min(cfg.top_k, len(records)))
    idx = np.array([r.train_index for r in top])
    nn = retrain_influences(
        train, idx, test_x[0], float(test_y[0]),
        net_seed=subseed(cfg.seed, "net"), m=cfg.width, kappa=cfg.kappa,
        config=cfg.train_config(),
    )
    rows = [
        [int(r.train_index), r.i_ntk, r.i_hat, float(nn[j])]
        for j, r in enumerate(top)
    ]
    matio.write_csv(out / "results.csv", ("train_index", "i_ntk", "i_hat", "i_nn"), rows)
    exact = correlation_summary([r.i_ntk for r in top], nn)
    ihvp = correlation_summary([r.i_hat for r in top], nn)
    return {
        "pearson_exact_vs_nn": exact.pearson,
        "spearman_exact_vs_nn": exact.spearman,
        "pearson_ihvp_vs_nn": ihvp.pearson,
        "n_pairs": exact.n_pairs,
    }


def run_table1_widths(cfg: ExperimentConfig, out: Path) -> dict:
    rows = []
    for seed in cfg.seeds:
        # one dataset and one target pair-set per seed, shared across widths
        data_seed = subseed(cfg.seed, f"data{seed}")
        train, test_x, test_y = resolve_data(cfg, data_seed)
        _, model = _fit_on(train, cfg.lam)
        cr = KernelCross(cross_many(train, test_x[:1])[0], test_x[0])
        records = influence_records(model, cr, float(test_y[0]), test_id=0)
        top = top_k_by_magnitude(records, min(cfg.top_k, len(records)))
        idx = np.array([r.train_index for r in top])
        exact_vals = [r.i_ntk for r in top]
        for width in cfg.widths:
            nn = retrain_influences(
                train, idx, test_x[0], float(test_y[0]),
                net_seed=subseed(cfg.seed, f"net{seed}"), m=int(width), kappa=cfg.kappa,
                config=cfg.train_config(),
            )
            summary = correlation_summary(exact_vals, nn)
            rows.append([int(width), int(seed), summary.pearson, summary.spearman, summary.n_pairs])
    rows.sort(key=lambda row: (row[0], row[1]))
    matio.write_csv(
        out / "results.csv", ("width", "seed", "pearson_r", "spearman_rho", "n_pairs"), rows
    )
    by_width = {}
    for w, s, r, rho, n in rows:
        by_width.setdefault(w, []).append(r)
    return {"mean_pearson_by_width": {str(w): float(np.mean(v)) for w, v in by_width.items()}}


def run_fig2_lambda_sweep(cfg: ExperimentConfig, out: Path) -> dict:
    train, test_x, test_y = resolve_data(cfg, cfg.seed)
    kernel = gram(train)
    rows = []
    for lam in cfg.lambda_grid:
        model = fit(kernel, train.labels, float(lam))
        ratio = spectral_ratio(model)
        rates, bound_rates = [], []
        for recs in _records_for_tests(model, train, test_x, test_y):
            for r in top_k_by_magnitude(recs, min(cfg.top_k, len(recs))):
                if not np.isfinite(r.error_rate):
                    continue
                rates.append(r.error_rate)
                bound_rates.append(max(0.0, ratio - r.term2 / abs(r.i_ntk)))
        rows.append(
            [float(lam), float(np.mean(rates)), float(np.mean(bound_rates)), ratio, len(rates)]
        )
    matio.write_csv(
        out / "results.csv",
        ("lam", "mean_error_rate", "mean_lower_bound", "spectral_ratio", "n_pairs"),
        rows,
    )
    return {"lambda_grid": [float(l) for l in cfg.lambda_grid]}


def run_fig3_density(cfg: ExperimentConfig, out: Path) -> dict:
    train, test_x, test_y = resolve_data(cfg, cfg.seed)
    _, model = _fit_on(train, cfg.lam)
    density = kde_density(train)
    sum_rate = np.zeros(train.n)
    count = np.zeros(train.n)
    for recs in _records_for_tests(model, train, test_x, test_y):
        for r in recs:
            if np.isfinite(r.error_rate):
                sum_rate[r.train_index] += r.error_rate
                count[r.train_index] += 1
    seen = count > 0
    mean_rate = np.where(seen, sum_rate / np.maximum(count, 1), np.nan)
    a_vals = model.a_values()
    groups = train.group_ids if train.group_ids is not None else np.zeros(train.n, np.int64)
    rows = [
        [i, int(groups[i]), float(density[i]), float(mean_rate[i]), float(a_vals[i])]
        for i in range(train.n)
    ]
    matio.write_csv(
        out / "results.csv",
        ("train_index", "group", "density", "mean_error_rate", "a_value"),
        rows,
    )
    mask = seen & np.isfinite(mean_rate)
    rho = spearman_rho(density[mask], mean_rate[mask])
    return {"spearman_density_vs_error": rho, "n_points": int(mask.sum())}


def run_fig4_rankings(cfg: ExperimentConfig, out: Path) -> dict:
    train, test_x, test_y = resolve_data(cfg, cfg.seed)
    _, model = _fit_on(train, cfg.lam)
    rows = []
    per_test = _records_for_tests(model, train, test_x, test_y)
    k = max(1, min(3, train.n // 3))
    for t, recs in enumerate(per_test):
        by_value = sorted(recs, key=lambda r: r.i_ntk)
        by_mag = sorted(recs, key=lambda r: abs(r.i_ntk))
        picks = (
            [("harmful", j, by_value[j]) for j in range(k)]
            + [("helpful", j, by_value[-1 - j]) for j in range(k)]
            + [("neutral", j, by_mag[j]) for j in range(k)]
        )
        for category, rank, r in picks:
            rows.append([t, category, rank, int(r.train_index), r.i_ntk, r.i_hat])
    matio.write_csv(
        out / "results.csv",
        ("test_id", "category", "rank", "train_index", "i_ntk", "i_hat"),
        rows,
    )
    return {"n_test_points": len(per_test), "per_category": k}


def run_fig5_complexity(cfg: ExperimentConfig, out: Path) -> dict:
    train, test_x, test_y = resolve_data(cfg, cfg.seed)
    if cfg.flip_fraction > 0:
        train = flip_labels(train, cfg.flip_fraction, subseed(cfg.seed, "flip"))
    kernel, model = _fit_on(train, cfg.lam)
    per_test = _records_for_tests(model, train, test_x, test_y)
    mean_infl = np.zeros(train.n)
    for recs in per_test:
        mean_infl += np.array([r.i_ntk for r in recs])
    mean_infl /= len(per_test)
    report = group_complexity(kernel, train.labels, mean_infl, cfg.n_groups)
    report_to_csv(out / "results.csv", report)
    top2 = np.argsort(report.complexity)[-2:]
    return {
        "total_complexity": report.total,
        "top2_groups": sorted(int(g) for g in top2),
        "extremes_are_top2": sorted(int(g) for g in top2) == [0, report.n_groups - 1],
    }


def _time_grid(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.t_min <= 0 or cfg.t_max <= cfg.t_min or cfg.n_times < 2:
        raise ParameterError("need 0 < t_min < t_max and at least 2 time points")
    return np.geomspace(cfg.t_min, cfg.t_max, cfg.n_times)


def run_fig6_tracking(cfg: ExperimentConfig, out: Path) -> dict:
    train, test_x, test_y = resolve_data(cfg, cfg.seed)
    trace = track_top_influencers(train, test_x, test_y, _time_grid(cfg))
    trace_to_csv(out / "results.csv", trace)
    switches = int(np.sum(trace.top_influencer[1:] != trace.top_influencer[:-1]))
    return {"n_times": int(trace.times.size), "influencer_switches": switches}


def run_fig7_label_noise(cfg: ExperimentConfig, out: Path) -> dict:
    train, test_x, test_y = resolve_data(cfg, cfg.seed)
    noisy = flip_labels(train, cfg.flip_fraction, subseed(cfg.seed, "flip"))
    trace = track_top_influencers(noisy, test_x, test_y, _time_grid(cfg))
    trace_to_csv(out / "trace.csv", trace)
    rows = [
        [float(t), float(nf), float(np.mean(np.abs(trace.top_influence[j])))]
        for j, (t, nf) in enumerate(zip(trace.times, trace.noise_fraction))
    ]
    matio.write_csv(out / "results.csv", ("time", "noise_fraction", "mean_abs_top_influence"), rows)
    nf = trace.noise_fraction
    peak = int(np.argmax(nf))
    interior = bool(0 < peak < nf.size - 1 and nf[peak] > nf[0] and nf[peak] > nf[-1])
    return {
        "flip_fraction": cfg.flip_fraction,
        "peak_time": float(trace.times[peak]),
        "peak_noise_fraction": float(nf[peak]),
        "interior_peak": interior,
    }


def run_thm4_bound(cfg: ExperimentConfig, out: Path) -> dict:
    spec = _mixture_spec(cfg, cfg.seed)
    counts = (cfg.base_count * cfg.count_growth ** np.arange(cfg.n_clusters)).astype(int)
    n = int(counts.sum()) if not cfg.proportions else cfg.n_train
    train = generate_mixture(spec, n, subseed(cfg.seed, "train"))
    test = generate_mixture(spec, cfg.n_test, subseed(cfg.seed, "test"))
    kernel = gram(train)
    bi = BoundInputs.from_radius(cfg.radius, kernel.lambda_max)
    lam = cfg.lam if cfg.lam > 0 else cfg.lam_margin * bi.lam_threshold
    if not np.isfinite(lam):
        raise ParameterError(
            f"radius {cfg.radius} is too wide for the bound (threshold is infinite)"
        )
    model = fit(kernel, train.labels, lam)
    gamma = gamma_hat(model)
    cluster_of = train.group_ids
    cluster_mass = np.bincount(cluster_of, minlength=spec.n_clusters) / train.n
    rows = []
    held = 0
    total = 0
    for recs in _records_for_tests(model, train, test.inputs, test.labels):
        for r in recs:
            p_k = float(cluster_mass[cluster_of[r.train_index]])
            bound = density_upper_bound(r, float(gamma[r.train_index]), p_k, train.n)
            gap = abs(r.i_ntk - r.i_hat)
            ok = gap <= bound + 1e-12
            held += ok
            total += 1
            rows.append(
                [
                    r.test_id,
                    int(r.train_index),
                    int(cluster_of[r.train_index]),
                    p_k,
                    float(gamma[r.train_index]),
                    r.i_ntk,
                    r.i_hat,
                    gap,
                    bound,
                    int(ok),
                ]
            )
    matio.write_csv(
        out / "results.csv",
        (
            "test_id", "train_index", "cluster", "p_k", "gamma",
            "i_ntk", "i_hat", "abs_gap", "upper_bound", "holds",
        ),
        rows,
    )
    return {
        "n_train": train.n,
        "lam": float(lam),
        "lam_threshold": bi.lam_threshold,
        "eps_r": bi.eps_r,
        "coverage": held / total,
    }


_RUNNERS = {
    "fig1_scatter": run_fig1_scatter,
    "table1_widths": run_table1_widths,
    "fig2_lambda_sweep": run_fig2_lambda_sweep,
    "fig3_density": run_fig3_density,
    "fig4_rankings": run_fig4_rankings,
    "fig5_complexity": run_fig5_complexity,
    "fig6_tracking": run_fig6_tracking,
    "fig7_label_noise": run_fig7_label_noise,
    "thm4_bound": run_thm4_bound,
}


def apply_experiment_defaults(cfg: ExperimentConfig, user_keys: set[str]) -> ExperimentConfig:
    """Overlay per-experiment defaults for fields the user left unset."""
    overrides = {
        k: v
        for k, v in _EXPERIMENT_DEFAULTS.get(cfg.experiment, {}).items()
        if k not in user_keys
    }
    return replace(cfg, **overrides) if overrides else cfg


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run one experiment, writing results.csv and manifest.json; returns the out dir."""
    if cfg.experiment not in _RUNNERS:
        raise ParameterError(
            f"unknown experiment {cfg.experiment!r}; known: {', '.join(sorted(_RUNNERS))}"
        )
    out = Path(cfg.out_dir) / cfg.experiment
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    summary = _RUNNERS[cfg.experiment](cfg, out)
    elapsed = time.time() - started
    manifest = {
        "experiment": cfg.experiment,
        "package_version": __version__,
        "seed": cfg.seed,
        "config": {f.name: _jsonable(getattr(cfg, f.name)) for f in fields(cfg)},
        "summary": summary,
        "outputs": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
        "elapsed_seconds": round(elapsed, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    if isinstance(v, (np.integer, np.floating)):
        return v.item()
    return v
