"""Accuracy metrics and the four experiment protocols.

Metrics come in three grades.  Class detection accuracy scores the top-N
class set against the truth assuming the true load count N is known.
Count accuracy scores the load-count head alone.  Strict accuracy demands
both at once: the predicted count must match and the top-n_hat classes
must equal the truth set exactly, so it never exceeds either of the
looser metrics.

Experiments:

* e1     train/test split per combination (70/30 by default), fresh model
         per run, accuracies averaged over runs.
* e2     as e1 but with only a handful of multi-load training samples.
* e3     leave-one-combination-out: each multi-load combo is dropped from
         training and evaluated on its own samples.
* mot    single-label baseline trained on singles only, evaluated on both
         held-out singles and all multi-load samples (top-1 membership).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, encode_target, sample_seed, split_indices
from .errors import InsufficientSamples, LengthMismatch
from .loads import LoadClass, N_CLASSES
from .network import NetConfig, Prediction, init, predict_probs, top_k_classes, train
from .probe import features

_ACC_EPS = 1e-12


# ---------------------------------------------------------------------------
# Metrics over prediction lists (the public, spec-facing form)
# ---------------------------------------------------------------------------


def _truth_index_sets(truths) -> list:
    out = []
    for t in truths:
        out.append(sorted(c.index for c in t))
    return out


def class_detection_accuracy(preds, truths) -> float:
    """Fraction of samples whose top-|truth| classes equal the truth set.

    The true load count is assumed known; ties in the probabilities break
    toward the lower class index.
    """
    if len(preds) != len(truths):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truths)} truths")
    hits = 0
    for p, want in zip(preds, _truth_index_sets(truths)):
        hits += sorted(top_k_classes(p.class_probs, len(want))) == want
    return hits / len(preds)


def count_accuracy(preds, truths) -> float:
    """Fraction of samples whose predicted load count matches the truth."""
    if len(preds) != len(truths):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truths)} truths")
    hits = sum(1 for p, t in zip(preds, truths) if p.n_hat == len(t))
    return hits / len(preds)


def strict_accuracy(preds, truths) -> float:
    """Fraction with both the load count and the top-n_hat set correct."""
    if len(preds) != len(truths):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truths)} truths")
    hits = 0
    for p, t in zip(preds, truths):
        want = frozenset(c.index for c in t)
        hits += p.n_hat == len(t) and p.top_set == want
    return hits / len(preds)


# ---------------------------------------------------------------------------
# Vectorized scoring used inside the experiment loops
# ---------------------------------------------------------------------------


def _rank_matrix(class_probs: np.ndarray) -> np.ndarray:
    """Per-row class indices sorted by descending probability, stable ties."""
    return np.argsort(-class_probs, axis=1, kind="stable")


def _score_block(class_probs, count_probs, truth_sets):
    """Per-sample (class_ok, count_ok, strict_ok) boolean arrays."""
    n = class_probs.shape[0]
    order = _rank_matrix(class_probs)
    n_hat = np.argmax(count_probs, axis=1) + 1 if count_probs.shape[1] else \
        np.ones(n, dtype=int)
    class_ok = np.zeros(n, dtype=bool)
    strict_ok = np.zeros(n, dtype=bool)
    count_ok = np.zeros(n, dtype=bool)
    for i in range(n):
        want = truth_sets[i]
        k = len(want)
        class_ok[i] = set(order[i, :k].tolist()) == want
        count_ok[i] = n_hat[i] == k
        strict_ok[i] = count_ok[i] and set(order[i, :n_hat[i]].tolist()) == want
    return class_ok, count_ok, strict_ok, order, n_hat


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    """Per-combination and aggregate accuracies, averaged over runs."""

    per_combo: dict
    aggregate: dict
    runs: int

    def __post_init__(self):
        for combo_id, acc in self.per_combo.items():
            s, c, n = acc["strict_acc"], acc["class_detection_acc"], acc["count_acc"]
            if not (0 <= s <= 1 and 0 <= c <= 1 and 0 <= n <= 1):
                raise ValueError(f"accuracy out of [0,1] for {combo_id}")
            if s > min(c, n) + _ACC_EPS:
                raise ValueError(
                    f"strict accuracy exceeds its bounds for {combo_id}")
        agg = self.aggregate
        if agg["avg_strict"] > agg["avg_class_detection"] + _ACC_EPS:
            raise ValueError("aggregate strict exceeds class detection")


@dataclass
class OmissionReport:
    """Leave-one-combination-out outcomes for every omitted multi combo."""

    per_combo: dict
    aggregate: dict
    runs_per_combo: int

    def __post_init__(self):
        chains = list(self.per_combo.values()) + [self.aggregate]
        for row in chains:
            a, b, c = (row["at_least_one_correct"], row["all_n_correct"],
                       row["all_n_plus_count_correct"])
            if not (a + _ACC_EPS >= b >= c - _ACC_EPS) or b + _ACC_EPS < c:
                raise ValueError("omission hit-rate chain ordering violated")


@dataclass
class MotReport:
    """Single-load-trained baseline: per-combo top-1 accuracies."""

    per_combo: dict
    singles_avg: float
    multis_avg: float
    runs: int


@dataclass
class HarnessConfig:
    """Everything the experiment protocols need besides the dataset."""

    net: NetConfig = field(default_factory=NetConfig)
    feature_scale: tuple = (1200.0, 1200.0)
    seed: int = 20260801


def _features_and_targets(ds: Dataset, cfg: HarnessConfig):
    x = np.stack([features(s.matrices, cfg.feature_scale).channels for s in ds])
    t_class = np.zeros((len(ds), cfg.net.n_classes))
    t_count = np.zeros((len(ds), 3))
    truth_sets = []
    for i, s in enumerate(ds):
        tv = encode_target(s.labels, cfg.net.n_classes)
        t_class[i] = tv.class_part
        t_count[i] = tv.count_part
        truth_sets.append(set(c.index for c in s.labels))
    return x, t_class, t_count, truth_sets


def _run_seed(cfg: HarnessConfig, tag: str, run: int) -> int:
    return sample_seed(cfg.seed, tag, run, "run") % (2 ** 63)


def _train_once(x, t_class, t_count, train_idx, net_cfg: NetConfig):
    subset = (x[train_idx], t_class[train_idx],
              t_count[train_idx] if net_cfg.count_outputs else None)
    return train(init(net_cfg), subset, net_cfg).params


def _map_ordered(fn, tasks, jobs: int):
    """Run tasks in order or across worker processes; order is preserved,
    so the reduction downstream is identical either way."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _accumulate_combo_scores(store, ds, test_idx, class_ok, count_ok, strict_ok):
    combo_rows: dict[str, list] = {}
    for pos, i in enumerate(test_idx):
        combo_rows.setdefault(ds[i].combo_id, []).append(pos)
    for combo_id, rows in combo_rows.items():
        rows = np.asarray(rows)
        rec = store.setdefault(combo_id, {"class": [], "count": [], "strict": []})
        rec["class"].append(float(class_ok[rows].mean()))
        rec["count"].append(float(count_ok[rows].mean()))
        rec["strict"].append(float(strict_ok[rows].mean()))


def _finalize_report(store, runs) -> EvalReport:
    per_combo = {}
    for combo_id, rec in store.items():
        per_combo[combo_id] = {
            "class_detection_acc": float(np.mean(rec["class"])),
            "count_acc": float(np.mean(rec["count"])),
            "strict_acc": float(np.mean(rec["strict"])),
        }
    combos = sorted(per_combo)
    cda = [per_combo[c]["class_detection_acc"] for c in combos]
    strict = [per_combo[c]["strict_acc"] for c in combos]
    aggregate = {
        "avg_class_detection": float(np.mean(cda)),
        "worst_class_detection": float(np.min(cda)),
        "avg_strict": float(np.mean(strict)),
        "worst_strict": float(np.min(strict)),
    }
    return EvalReport(per_combo=per_combo, aggregate=aggregate, runs=runs)


class _SplitRunWorker:
    """One experiment run; a class so fork-based pools can pickle it."""

    def __init__(self, ds, cfg, tag, train_per_combo, test_per_combo, overrides,
                 x, t_class, t_count, truth_sets):
        self.ds = ds
        self.cfg = cfg
        self.tag = tag
        self.train_per_combo = train_per_combo
        self.test_per_combo = test_per_combo
        self.overrides = overrides
        self.x = x
        self.t_class = t_class
        self.t_count = t_count
        self.truth_sets = truth_sets

    def __call__(self, run: int):
        split_seed = _run_seed(self.cfg, self.tag + "-split", run)
        train_idx, test_idx = split_indices(self.ds, self.train_per_combo,
                                            self.test_per_combo, split_seed,
                                            self.overrides)
        net_cfg = replace(self.cfg.net,
                          init_seed=_run_seed(self.cfg, self.tag + "-init", run))
        params = _train_once(self.x, self.t_class, self.t_count, train_idx, net_cfg)
        cp, np_ = predict_probs(params, self.x[test_idx], net_cfg)
        class_ok, count_ok, strict_ok, _, _ = _score_block(
            cp, np_, [self.truth_sets[i] for i in test_idx])
        return test_idx, class_ok, count_ok, strict_ok


def _split_eval_experiment(ds, cfg, runs, tag, train_per_combo, test_per_combo,
                           overrides=None, jobs=1, progress=None):
    x, t_class, t_count, truth_sets = _features_and_targets(ds, cfg)
    worker = _SplitRunWorker(ds, cfg, tag, train_per_combo, test_per_combo,
                             overrides, x, t_class, t_count, truth_sets)
    store: dict = {}
    if jobs > 1:
        results = _map_ordered(worker, list(range(runs)), jobs)
    else:
        results = []
        for run in range(runs):
            results.append(worker(run))
            if progress is not None:
                progress(tag, run + 1, runs)
    for test_idx, class_ok, count_ok, strict_ok in results:
        _accumulate_combo_scores(store, ds, test_idx, class_ok, count_ok, strict_ok)
    return _finalize_report(store, runs)


def experiment_e1(ds: Dataset, cfg: HarnessConfig, runs: int = 10,
                  train_per_combo: int = 70, test_per_combo: int = 30,
                  jobs: int = 1, progress=None) -> EvalReport:
    """Random split per combination, fresh model per run, averaged."""
    return _split_eval_experiment(ds, cfg, runs, "e1", train_per_combo,
                                  test_per_combo, jobs=jobs, progress=progress)


def experiment_e2(ds: Dataset, cfg: HarnessConfig, runs: int = 10,
                  singles_train: int = 160, multi_train: int = 10,
                  test_per_combo: int = 90, jobs: int = 1,
                  progress=None) -> EvalReport:
    """The sparse-multis protocol: few multi-load training samples."""
    overrides = {1: (singles_train, test_per_combo),
                 2: (multi_train, test_per_combo),
                 3: (multi_train, test_per_combo)}
    return _split_eval_experiment(ds, cfg, runs, "e2", singles_train,
                                  test_per_combo, overrides=overrides,
                                  jobs=jobs, progress=progress)


class _OmitComboWorker:
    """Leave-one-out evaluation of a single omitted combination."""

    def __init__(self, ds, cfg, by_combo, truth_sets, x, t_class, t_count,
                 runs_per_combo, train_per_combo):
        self.ds = ds
        self.cfg = cfg
        self.by_combo = by_combo
        self.truth_sets = truth_sets
        self.x = x
        self.t_class = t_class
        self.t_count = t_count
        self.runs_per_combo = runs_per_combo
        self.train_per_combo = train_per_combo

    def __call__(self, combo_id: str):
        ds, cfg, x = self.ds, self.cfg, self.x
        omit_idx = set(self.by_combo[combo_id])
        keep = [i for i in range(len(ds)) if i not in omit_idx]
        sub = ds.subset(keep)
        eval_idx = sorted(omit_idx)
        truth = [self.truth_sets[i] for i in eval_idx]

        k = cfg.net.n_classes
        top_freq = np.zeros(k)
        count_dist = np.zeros(3)
        rates = np.zeros(3)
        for run in range(self.runs_per_combo):
            split_seed = _run_seed(cfg, f"e3-{combo_id}-split", run)
            train_rel, _ = split_indices(sub, self.train_per_combo, 0, split_seed)
            train_idx = [keep[i] for i in train_rel]
            net_cfg = replace(cfg.net,
                              init_seed=_run_seed(cfg, f"e3-{combo_id}-init", run))
            params = _train_once(x, self.t_class, self.t_count, train_idx, net_cfg)
            cp, np_ = predict_probs(params, x[eval_idx], net_cfg)
            _, _, _, order, n_hat = _score_block(cp, np_, truth)
            for i, want in enumerate(truth):
                top = set(order[i, :n_hat[i]].tolist())
                top_freq[list(top)] += 1.0
                count_dist[n_hat[i] - 1] += 1.0
                all_n = set(order[i, :len(want)].tolist()) == want
                rates += (bool(top & want),
                          all_n,
                          all_n and n_hat[i] == len(want))
        n_cases = self.runs_per_combo * len(eval_idx)
        return combo_id, {
            "top_class_freq": (top_freq / n_cases).tolist(),
            "count_distribution": (count_dist / n_cases).tolist(),
            "at_least_one_correct": rates[0] / n_cases,
            "all_n_correct": rates[1] / n_cases,
            "all_n_plus_count_correct": rates[2] / n_cases,
            "cases": int(n_cases),
        }, rates


def experiment_e3_omit(ds: Dataset, cfg: HarnessConfig, runs_per_combo: int = 10,
                       train_per_combo: int = 70, jobs: int = 1,
                       progress=None) -> OmissionReport:
    """Leave-one-combination-out over every multi-load combination.

    For each omitted combo the model trains on everything else
    (train_per_combo samples per remaining combination) and is evaluated
    on all samples of the omitted combo.
    """
    x, t_class, t_count, truth_sets = _features_and_targets(ds, cfg)
    by_combo = ds.by_combo()
    multi_combos = [c for c, idx in by_combo.items() if len(ds[idx[0]].labels) > 1]
    if not multi_combos:
        raise InsufficientSamples("<no multi-load combos>", 1, 0)

    worker = _OmitComboWorker(ds, cfg, by_combo, truth_sets, x, t_class, t_count,
                              runs_per_combo, train_per_combo)
    ordered = sorted(multi_combos)
    per_combo = {}
    total_counts = np.zeros(3)
    if jobs > 1:
        results = _map_ordered(worker, ordered, jobs)
    else:
        results = []
        for done, combo_id in enumerate(ordered):
            results.append(worker(combo_id))
            if progress is not None:
                progress("e3", done + 1, len(ordered))
    for combo_id, rec, rates in results:
        per_combo[combo_id] = rec
        total_counts += rates

    grand = sum(rec["cases"] for rec in per_combo.values())
    aggregate = {
        "at_least_one_correct": float(total_counts[0] / grand),
        "all_n_correct": float(total_counts[1] / grand),
        "all_n_plus_count_correct": float(total_counts[2] / grand),
    }
    return OmissionReport(per_combo=per_combo, aggregate=aggregate,
                          runs_per_combo=runs_per_combo)


class _MotRunWorker:
    """One run of the single-label baseline (picklable for worker pools)."""

    def __init__(self, cfg, net_cfg_base, singles_sub, singles_ds_idx,
                 multi_eval, singles_train, singles_test, x, t_single):
        self.cfg = cfg
        self.net_cfg_base = net_cfg_base
        self.singles_sub = singles_sub
        self.singles_ds_idx = singles_ds_idx
        self.multi_eval = multi_eval
        self.singles_train = singles_train
        self.singles_test = singles_test
        self.x = x
        self.t_single = t_single

    def __call__(self, run: int):
        split_seed = _run_seed(self.cfg, "mot-split", run)
        train_rel, test_rel = split_indices(self.singles_sub, self.singles_train,
                                            self.singles_test, split_seed)
        train_idx = [self.singles_ds_idx[i] for i in train_rel]
        test_idx = [self.singles_ds_idx[i] for i in test_rel]
        net_cfg = replace(self.net_cfg_base,
                          init_seed=_run_seed(self.cfg, "mot-init", run))
        params = _train_once(self.x, self.t_single, None, train_idx, net_cfg)
        eval_idx = test_idx + self.multi_eval
        cp, _ = predict_probs(params, self.x[eval_idx], net_cfg)
        return eval_idx, np.argmax(cp, axis=1)


def experiment_e_mot(ds: Dataset, cfg: HarnessConfig, runs: int = 10,
                     singles_train: int = 220, singles_test: int = 30,
                     jobs: int = 1, progress=None) -> MotReport:
    """Single-label baseline: trained on singles, tested on everything.

    A multi-load sample counts as correct when the single predicted class
    is one of the connected loads.
    """
    net_cfg_base = replace(cfg.net, count_outputs=0)
    x, t_class, _, truth_sets = _features_and_targets(ds, cfg)
    by_combo = ds.by_combo()
    singles = {c: idx for c, idx in by_combo.items() if len(ds[idx[0]].labels) == 1}
    multis = {c: idx for c, idx in by_combo.items() if len(ds[idx[0]].labels) > 1}
    if not singles:
        raise InsufficientSamples("<no single-load combos>", 1, 0)
    singles_ds_idx = [i for idx in singles.values() for i in idx]
    singles_sub = ds.subset(singles_ds_idx)

    # One-hot class targets for the single-label variant.
    t_single = np.zeros_like(t_class)
    for i, s in enumerate(ds):
        if len(s.labels) == 1:
            t_single[i, next(iter(s.labels)).index] = 1.0

    multi_eval = [i for idx in multis.values() for i in idx]
    worker = _MotRunWorker(cfg, net_cfg_base, singles_sub, singles_ds_idx,
                           multi_eval, singles_train, singles_test, x, t_single)

    store: dict[str, list] = {}
    if jobs > 1:
        results = _map_ordered(worker, list(range(runs)), jobs)
    else:
        results = []
        for run in range(runs):
            results.append(worker(run))
            if progress is not None:
                progress("mot", run + 1, runs)
    for eval_idx, top1 in results:
        for pos, i in enumerate(eval_idx):
            ok = top1[pos] in truth_sets[i]
            store.setdefault(ds[i].combo_id, []).append(float(ok))

    per_combo = {c: float(np.mean(vals)) for c, vals in store.items()}
    singles_acc = [per_combo[c] for c in singles if c in per_combo]
    multi_acc = [per_combo[c] for c in multis if c in per_combo]
    return MotReport(
        per_combo=per_combo,
        singles_avg=float(np.mean(singles_acc)),
        multis_avg=float(np.mean(multi_acc)) if multi_acc else float("nan"),
        runs=runs,
    )


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def summary_dict(report) -> dict:
    """Machine-readable aggregate summary for CI assertions."""
    if isinstance(report, EvalReport):
        return {"kind": "eval", "runs": report.runs, **report.aggregate}
    if isinstance(report, OmissionReport):
        return {"kind": "omission", "runs_per_combo": report.runs_per_combo,
                **report.aggregate}
    if isinstance(report, MotReport):
        return {"kind": "mot", "runs": report.runs,
                "singles_avg": report.singles_avg, "multis_avg": report.multis_avg}
    raise TypeError(f"unknown report type {type(report)!r}")


def _combo_metric_map(report, metric: str) -> dict:
    if isinstance(report, EvalReport):
        return {c: acc[metric] for c, acc in report.per_combo.items()}
    if isinstance(report, OmissionReport):
        return {c: rec[metric] for c, rec in report.per_combo.items()}
    if isinstance(report, MotReport):
        return dict(report.per_combo)
    raise TypeError(f"unknown report type {type(report)!r}")


def _grid_metrics(report) -> list:
    if isinstance(report, EvalReport):
        return ["class_detection_acc", "count_acc", "strict_acc"]
    if isinstance(report, OmissionReport):
        return ["at_least_one_correct", "all_n_correct", "all_n_plus_count_correct"]
    return ["accuracy"]


def export_report(report, path, format: str = "csv") -> None:
    """Write a report as CSV rows or as class-by-class grids.

    CSV: one row per combination plus aggregate rows, values to six
    decimals.  Grid: an 11x11 matrix per metric with singles on the
    diagonal, pair combos off-diagonal, blank cells where no combination
    was measured, and any three-load combos listed below the grid.
    """
    if format == "csv":
        _export_csv(report, path)
    elif format == "grid":
        _export_grid(report, path)
    else:
        raise ValueError(f"unknown format '{format}'")


def _export_csv(report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if isinstance(report, EvalReport):
            writer.writerow(["combo_id", "class_detection_acc", "count_acc",
                             "strict_acc"])
            for combo_id in sorted(report.per_combo):
                acc = report.per_combo[combo_id]
                writer.writerow([combo_id,
                                 f"{acc['class_detection_acc']:.6f}",
                                 f"{acc['count_acc']:.6f}",
                                 f"{acc['strict_acc']:.6f}"])
            for key, val in report.aggregate.items():
                writer.writerow([f"<{key}>", f"{val:.6f}", "", ""])
        elif isinstance(report, OmissionReport):
            writer.writerow(["combo_id", "at_least_one_correct", "all_n_correct",
                             "all_n_plus_count_correct",
                             *(f"top_freq_{c.label}" for c in LoadClass),
                             "pred_1_load", "pred_2_loads", "pred_3_loads"])
            for combo_id in sorted(report.per_combo):
                rec = report.per_combo[combo_id]
                writer.writerow([
                    combo_id,
                    f"{rec['at_least_one_correct']:.6f}",
                    f"{rec['all_n_correct']:.6f}",
                    f"{rec['all_n_plus_count_correct']:.6f}",
                    *(f"{v:.6f}" for v in rec["top_class_freq"]),
                    *(f"{v:.6f}" for v in rec["count_distribution"]),
                ])
            for key, val in report.aggregate.items():
                writer.writerow([f"<{key}>", f"{val:.6f}", "", ""])
        elif isinstance(report, MotReport):
            writer.writerow(["combo_id", "accuracy"])
            for combo_id in sorted(report.per_combo):
                writer.writerow([combo_id, f"{report.per_combo[combo_id]:.6f}"])
            writer.writerow(["<singles_avg>", f"{report.singles_avg:.6f}"])
            writer.writerow(["<multis_avg>", f"{report.multis_avg:.6f}"])
        else:
            raise TypeError(f"unknown report type {type(report)!r}")


def _export_grid(report, path) -> None:
    labels = [c.label for c in LoadClass]
    with open(path, "w", encoding="utf-8") as fh:
        for metric in _grid_metrics(report):
            values = _combo_metric_map(report, metric)
            fh.write(f"# {metric}\n")
            fh.write("," + ",".join(labels) + "\n")
            for a in LoadClass:
                cells = [a.label]
                for b in LoadClass:
                    combo = a.label if a is b else \
                        "+".join(sorted((a.label, b.label)))
                    cells.append(f"{values[combo]:.6f}" if combo in values else "")
                fh.write(",".join(cells) + "\n")
            triples = [c for c in values if c.count("+") == 2]
            for combo in sorted(triples):
                fh.write(f"{combo},{values[combo]:.6f}\n")
            fh.write("\n")
