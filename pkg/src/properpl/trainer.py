"""Progressive risk-consistent training and repeated-trial sweeps.

The ``ppl`` loop keeps a posterior estimate per training example, starting at
1/K. Each mini-batch computes the confidence-weighted loss from that estimate,
takes an SGD step, and then overwrites the batch rows of the estimate with the
softmax of the freshly updated model.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import Dataset
from .data import corrupt, make_synthetic, split_validation
from .errors import MissingLabels, NonFiniteLoss, PPLError, UsageError
from .estimators import (ESTIMATORS, ConfidenceMatrix, cc_losses, cl_coefficients, confidences,
                         mcl_coefficients)
from .genmodels import skewed_model
from .nn import (SGD, FeedForward, coefficient_cross_entropy, softmax_posterior,
                 weighted_cross_entropy)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    estimator: str = "ppl"
    model: str = "linear"
    hidden: tuple = (300, 300, 300, 300)
    exact: bool = False
    eval_every: int = 1
    debug: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise UsageError("epochs and batch_size must be at least 1")
        if not self.learning_rate > 0:
            raise UsageError("learning rate must be positive")
        if self.estimator not in ESTIMATORS:
            raise UsageError(f"estimator must be one of {ESTIMATORS}")
        if self.model not in ("linear", "mlp"):
            raise UsageError("model must be 'linear' or 'mlp'")
        if self.eval_every < 1:
            raise UsageError("eval_every must be at least 1")
        self.hidden = tuple(int(h) for h in self.hidden)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class EpochRecord:
    epoch: int
    train_risk: float
    val_acc: Optional[float]
    test_acc: Optional[float]
    wall_time: float


@dataclass
class TrainReport:
    config: dict
    epochs: list = field(default_factory=list)
    confidence_summary: dict = field(default_factory=dict)

    @property
    def final(self) -> EpochRecord:
        return self.epochs[-1]

    def to_dict(self, include_time: bool = True) -> dict:
        rows = []
        for r in self.epochs:
            row = asdict(r)
            if not include_time:
                row.pop("wall_time")
            rows.append(row)
        return {"config": self.config, "epochs": rows,
                "confidence_summary": self.confidence_summary}


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from integers and strings."""
    ints = []
    for p in parts:
        if isinstance(p, str):
            ints.extend(p.encode())
        elif isinstance(p, float):
            ints.append(int(round(p * 1_000_000)))
        else:
            ints.append(int(p))
    return int(np.random.SeedSequence(ints).generate_state(2, np.uint64)[0] >> np.uint64(1))


def build_model(config: TrainConfig, d: int, K: int) -> FeedForward:
    sizes = (d, K) if config.model == "linear" else (d, *config.hidden, K)
    return FeedForward(sizes, seed=derive_seed(config.seed, "init"))


def evaluate_accuracy(model: FeedForward, dataset: Dataset, batch_size: int = 4096) -> float:
    if dataset.labels is None:
        raise MissingLabels("accuracy needs true labels")
    if dataset.n == 0:
        return float("nan")
    hits = 0
    for start in range(0, dataset.n, batch_size):
        stop = start + batch_size
        hits += int((model.predict(dataset.features[start:stop]) == dataset.labels[start:stop]).sum())
    return hits / dataset.n


def _cc_objective(scores, cand):
    # score gradient of -log sum_{j in s} softmax_j is softmax minus its candidate-restricted renormalisation
    q = softmax_posterior(scores)
    r = np.where(cand, q, 0.0)
    r /= r.sum(axis=1, keepdims=True)
    return float(cc_losses(scores, cand).mean()), (q - r) / scores.shape[0]


def _run(dataset, config, objective, validation, test, posterior_state=None, on_epoch=None,
         on_batch=None):
    n = dataset.n
    if n == 0:
        raise UsageError("cannot train on an empty dataset")
    model = build_model(config, dataset.dim, dataset.K)
    opt = SGD(config.learning_rate, config.momentum, config.weight_decay)
    order_rng = np.random.default_rng(derive_seed(config.seed, "shuffle"))
    report = TrainReport(config=config.to_dict())
    x = dataset.features
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        perm = order_rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            scores = model.forward(x[idx])
            loss, dscores = objective(scores, idx)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"epoch {epoch}, batch {b}: loss is {loss}")
            opt.step(model, model.backward(dscores))
            if posterior_state is not None:
                posterior_state[idx] = softmax_posterior(model.forward(x[idx]))
            total += loss * len(idx)
            if on_batch is not None:
                on_batch(epoch, b, idx, posterior_state)
        if config.debug and posterior_state is not None:
            ConfidenceMatrix.from_posteriors(posterior_state, dataset.candidate_matrix()).check()
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            val_acc = None if validation is None else evaluate_accuracy(model, validation)
            test_acc = None if test is None else evaluate_accuracy(model, test)
            record = EpochRecord(epoch, total / n, val_acc, test_acc, time.perf_counter() - t0)
            report.epochs.append(record)
            if on_epoch is not None:
                on_epoch(record)
            log.debug("epoch %d risk %.5f val %s test %s", epoch, record.train_risk, val_acc, test_acc)
    return model, report


def initial_posteriors(n: int, K: int) -> np.ndarray:
    return np.full((n, K), 1.0 / K)


def train(dataset: Dataset, config: TrainConfig, validation: Dataset | None = None,
          test: Dataset | None = None, on_epoch: Callable | None = None,
          on_batch: Callable | None = None):
    """Train on partial labels with the configured estimator; returns (model, report).

    ``on_batch(epoch, batch_index, indices, posteriors)`` runs after every
    step; ``posteriors`` is the live estimate array for ``ppl`` and None
    otherwise.
    """
    cand = dataset.candidate_matrix()
    K = dataset.K
    posterior = None
    kind = config.estimator
    if kind == "ppl":
        posterior = initial_posteriors(dataset.n, K)

        def objective(scores, idx):
            return weighted_cross_entropy(scores, confidences(posterior[idx], cand[idx]))
    elif kind == "cc":
        def objective(scores, idx):
            return _cc_objective(scores, cand[idx])
    else:
        coeffs = cl_coefficients(cand) if kind == "cl" else mcl_coefficients(cand)

        def objective(scores, idx):
            return coefficient_cross_entropy(scores, coeffs[idx])

    model, report = _run(dataset, config, objective, validation, test, posterior, on_epoch,
                         on_batch)
    if posterior is not None:
        conf = ConfidenceMatrix.from_posteriors(posterior, cand, epoch=config.epochs)
        report.confidence_summary = conf.summary(dataset.labels)
    return model, report


def train_supervised(dataset: Dataset, config: TrainConfig, validation=None, test=None,
                     on_epoch=None):
    """Ordinary cross-entropy training on the true labels, same schedule and seeds."""
    if dataset.labels is None:
        raise MissingLabels("supervised training needs true labels")
    onehot = np.eye(dataset.K)[dataset.labels - 1]

    def objective(scores, idx):
        return weighted_cross_entropy(scores, onehot[idx])

    return _run(dataset, config, objective, validation, test, None, on_epoch)


def select_hyperparameters(dataset, validation, config: TrainConfig,
                           learning_rates=(1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1),
                           weight_decays=(1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)):
    """Grid search by final validation accuracy; returns (best config, table)."""
    table = []
    best = None
    for lr in learning_rates:
        for wd in weight_decays:
            cfg = replace(config, learning_rate=lr, weight_decay=wd)
            try:
                _, rep = train(dataset, cfg, validation=validation)
                acc = rep.final.val_acc
            except PPLError as exc:
                log.warning("lr=%g wd=%g failed: %s", lr, wd, exc)
                acc = None
            table.append({"learning_rate": lr, "weight_decay": wd, "val_acc": acc})
            if acc is not None and (best is None or acc > best[0]):
                best = (acc, cfg)
    if best is None:
        raise UsageError("every hyperparameter setting failed")
    return best[1], table


# -- sweeps -----------------------------------------------------------------

class SyntheticFamily:
    """Fresh Gaussian train/test draws per trial."""

    def __init__(self, scenario, n_train=6000, n_test=2000):
        self.scenario = scenario
        self.n_train = n_train
        self.n_test = n_test

    def datasets(self, seed):
        train_set, _ = make_synthetic(self.scenario, self.n_train, derive_seed(seed, "train-data"))
        test_set, _ = make_synthetic(self.scenario, self.n_test, derive_seed(seed, "test-data"))
        return train_set, test_set

    def describe(self):
        return {"family": "synthetic", "scenario": self.scenario.describe(),
                "n_train": self.n_train, "n_test": self.n_test}


class FixedFamily:
    """The same labelled train/test data in every trial; only corruption varies."""

    def __init__(self, train_set, test_set, name="fixed"):
        self.train_set = train_set
        self.test_set = test_set
        self.name = name

    def datasets(self, seed):
        return self.train_set, self.test_set

    def describe(self):
        return {"family": self.name, "n_train": self.train_set.n, "n_test": self.test_set.n}


@dataclass
class RunResult:
    run_id: str
    alpha: float
    estimator: str
    trial: int
    records: list
    final_acc: Optional[float]
    final_risk: Optional[float]
    error: Optional[str] = None


def run_trial(family, alpha, estimator, trial, config: TrainConfig, master_seed,
              val_fraction=0.1) -> RunResult:
    run_id = f"a{alpha:g}-{estimator}-t{trial}"
    trial_seed = derive_seed(master_seed, "trial", trial)
    try:
        train_full, test_set = family.datasets(trial_seed)
        corrupted = corrupt(train_full, skewed_model(alpha, train_full.K),
                            derive_seed(trial_seed, "corrupt"))
        train_set, val_set = split_validation(corrupted, val_fraction, derive_seed(trial_seed, "split"))
        cfg = replace(config, estimator=estimator, seed=derive_seed(trial_seed, "train"))
        _, report = train(train_set, cfg, validation=val_set, test=test_set)
    except (PPLError, ArithmeticError, ValueError) as exc:
        return RunResult(run_id, alpha, estimator, trial, [], None, None, f"{type(exc).__name__}: {exc}")
    records = [{"run_id": run_id, "estimator": estimator, "alpha": alpha, "trial": trial,
                "epoch": r.epoch, "train_risk": r.train_risk, "val_acc": r.val_acc,
                "test_acc": r.test_acc} for r in report.epochs]
    return RunResult(run_id, alpha, estimator, trial, records, report.final.test_acc,
                     report.final.train_risk)


def _mean_se(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    mean = math.fsum(values) / len(values)
    if len(values) < 2:
        return mean, None
    return mean, float(np.std(values, ddof=1) / math.sqrt(len(values)))


@dataclass
class SweepReport:
    runs: list
    rows: list
    config: dict

    def row(self, alpha, estimator) -> dict:
        for r in self.rows:
            if r["alpha"] == alpha and r["estimator"] == estimator:
                return r
        raise KeyError((alpha, estimator))


def sweep(family, alphas, trials: int, config: TrainConfig, estimators=("ppl",),
          master_seed: int = 0, workers: int = 1, val_fraction: float = 0.1) -> SweepReport:
    """Train every (alpha, estimator, trial) combination and aggregate per (alpha, estimator)."""
    if trials < 1:
        raise UsageError("trials must be at least 1")
    jobs = [(a, e, t) for a in alphas for e in estimators for t in range(trials)]
    if workers > 1 and not config.exact:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_trial, family, a, e, t, config, master_seed, val_fraction)
                       for a, e, t in jobs]
            runs = [f.result() for f in futures]
    else:
        runs = [run_trial(family, a, e, t, config, master_seed, val_fraction) for a, e, t in jobs]
    rows = []
    for a in alphas:
        for e in estimators:
            cell = [r for r in runs if r.alpha == a and r.estimator == e]
            ok = [r for r in cell if r.error is None]
            for r in cell:
                if r.error is not None:
                    warnings.warn(f"run {r.run_id} failed and is excluded: {r.error}")
            mean_acc, se_acc = _mean_se([r.final_acc for r in ok])
            mean_risk, se_risk = _mean_se([r.final_risk for r in ok])
            rows.append({"alpha": a, "estimator": e, "mean_acc": mean_acc, "std_err": se_acc,
                         "mean_risk": mean_risk, "risk_std_err": se_risk,
                         "trials_ok": len(ok), "trials": len(cell)})
    resolved = {"alphas": list(alphas), "trials": trials, "estimators": list(estimators),
                "master_seed": master_seed, "val_fraction": val_fraction,
                "train": config.to_dict(), "family": family.describe()}
    return SweepReport(runs, rows, resolved)
