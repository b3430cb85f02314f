"""Semi-supervised benchmark: baseline vs. augmented labeled sets.

Per trial: a fresh 70/30 split with labels on 10% of the training rows; the
graph and autoencoder see only training rows. Each classifier is trained on
the labeled rows alone (baseline) and on every augmented version, and scored
on the held-out rows.
"""
from __future__ import annotations

import csv
import io
import logging
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .augment import AugmentConfig, augment
from .classifiers import KINDS, ClassifierConfig, classify
from .dataset import TabularDataset, compute_global, fit_layout, make_split, transform
from .graph import LABELED, UNLABELED, build_similarity, propagation_operator, two_step_prune
from .model import TrainConfig, train

log = logging.getLogger(__name__)

BASELINE = "baseline"


def variant_name(factor: int) -> str:
    return BASELINE if factor == 1 else f"{factor}x"


@dataclass(frozen=True)
class TrialResult:
    dataset: str
    classifier: str
    variant: str
    trial: int
    accuracy: float


@dataclass
class BenchmarkReport:
    results: list
    variants: list
    classifiers: list
    datasets: list
    config: dict = field(default_factory=dict)

    def means(self) -> dict:
        cells = defaultdict(list)
        for r in self.results:
            cells[(r.dataset, r.classifier, r.variant)].append(r.accuracy)
        return {k: sum(v) / len(v) for k, v in cells.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "classifier", "variant", "trial", "accuracy"])
        for r in self.results:
            w.writerow([r.dataset, r.classifier, r.variant, r.trial, repr(r.accuracy)])
        return buf.getvalue()

    def to_table(self) -> str:
        """Mean accuracies in percent, one row per (dataset, classifier)."""
        means = self.means()
        heads = ["Baseline" if v == BASELINE else f"Augmented ({v})" for v in self.variants]
        lines = ["{:<18}{:<22}".format("Dataset", "Classifier")
                 + "".join(f"{h:>16}" for h in heads)]
        for ds in self.datasets:
            for clf in self.classifiers:
                vals = "".join(f"{100 * means[(ds, clf, v)]:>16.2f}" for v in self.variants)
                lines.append(f"{ds:<18}{clf:<22}" + vals)
        return "\n".join(lines) + "\n"


def summarize_wins(report: BenchmarkReport) -> dict:
    """Count best variants per (dataset, classifier, trial); ties share the point."""
    cells = defaultdict(dict)
    for r in report.results:
        cells[(r.dataset, r.classifier, r.trial)][r.variant] = r.accuracy
    wins = {v: 0.0 for v in report.variants}
    for accs in cells.values():
        top = max(accs.values())
        best = [v for v, a in accs.items() if a == top]
        for v in best:
            wins[v] += 1.0 / len(best)
    return wins


def wins_to_csv(wins: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "wins"])
    for v, c in wins.items():
        w.writerow([v, repr(c)])
    return buf.getvalue()


def trial_seeds(master: int, dataset: str, trial: int) -> dict:
    """Independent seeds per trial, stable across processes and run order."""
    ss = np.random.SeedSequence([master, zlib.crc32(dataset.encode()), trial])
    split, model, aug, clf = (int(s) for s in ss.generate_state(4))
    return {"split": split, "model": model, "augment": aug, "classifier": clf}


def feature_matrix(data: TabularDataset, layout, fill: np.ndarray) -> np.ndarray:
    """Hard encoding for classifiers; missing cells take the training column mean."""
    x, m = transform(data, layout)
    return np.where(m > 0, x.values, fill[None, :])


def label_indices(data: TabularDataset) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(data.schema.label.categories)}
    return np.array([lookup[y] for y in data.labels], dtype=int)


def run_trial(name: str, data: TabularDataset, trial: int, factors: Sequence[int],
              train_cfg: TrainConfig, classifiers: Sequence[ClassifierConfig],
              seed: int, train_frac: float = 0.7, label_frac: float = 0.1,
              damage_rate: float = 0.8) -> list:
    seeds = trial_seeds(seed, name, trial)
    try:
        plan = make_split(len(data), train_frac, label_frac, seeds["split"])
        train_rows = data.subset(plan.train_indices, keep_labels=False)
        layout = fit_layout(train_rows)
        x, mask = transform(train_rows, layout)
        labeled_set = set(plan.labeled_indices.tolist())
        positions = [i for i, r in enumerate(plan.train_indices) if r in labeled_set]
        tags = [LABELED if r in labeled_set else UNLABELED for r in plan.train_indices]
        g = compute_global(x.values, mask)

        adj = two_step_prune(build_similarity(x.values, mask), tags)
        model = train(x.values, mask, propagation_operator(adj, True),
                      propagation_operator(adj, False), g, layout,
                      replace(train_cfg, seed=seeds["model"]))
        log.info("%s trial %d: GINN stopped at epoch %d (%s)", name, trial,
                 model.report.stop_epoch, model.report.stop_reason)

        labeled = data.subset(plan.train_indices[positions])
        test = data.subset(plan.test_indices)
        test_x, test_y = feature_matrix(test, layout, g), label_indices(test)
        n_classes = len(data.schema.label.categories)

        sets = {}
        for f in sorted(set([1, *factors])):
            aug = augment(model, adj, x.values, mask, positions, labeled,
                          AugmentConfig(f, damage_rate, seeds["augment"]))
            sets[variant_name(f)] = aug.data
        out = []
        for ccfg in classifiers:
            ccfg = replace(ccfg, seed=seeds["classifier"])
            for variant, tr in sets.items():
                pred = classify(feature_matrix(tr, layout, g), label_indices(tr), test_x,
                                ccfg, n_classes)
                acc = float(np.mean(pred == test_y))
                out.append(TrialResult(name, ccfg.kind, variant, trial, acc))
        return out
    except Exception as exc:
        raise RuntimeError(f"{name} trial {trial}: {exc}") from exc


def run_benchmark(datasets: Sequence[tuple[str, TabularDataset]], factors: Sequence[int] = (2, 5, 10),
                  trials: int = 5, seed: int = 0, train_cfg: Optional[TrainConfig] = None,
                  classifiers: Optional[Sequence[ClassifierConfig]] = None, jobs: int = 1,
                  **trial_kw) -> BenchmarkReport:
    train_cfg = train_cfg or TrainConfig()
    classifiers = list(classifiers or [ClassifierConfig(kind=k) for k in KINDS])
    factors = sorted(set(int(f) for f in factors if f > 1))
    tasks = [(name, data, t) for name, data in datasets for t in range(trials)]
    args = (factors, train_cfg, classifiers, seed)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            futures = [pool.submit(run_trial, n, d, t, *args, **trial_kw) for n, d, t in tasks]
            chunks = [f.result() for f in futures]
    else:
        chunks = [run_trial(n, d, t, *args, **trial_kw) for n, d, t in tasks]
    results = [r for chunk in chunks for r in chunk]
    variants = [BASELINE] + [variant_name(f) for f in factors]
    return BenchmarkReport(results, variants, [c.kind for c in classifiers],
                           [name for name, _ in datasets])
