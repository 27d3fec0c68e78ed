"""Uncertainty-gated early exiting.

Calibration fits Gaussians to the spatial norms of exit embeddings, split by
whether that exit's prediction was correct. At inference a sample walks the
gates in order and leaves at gate ``i`` when its norm is more likely under the
"correct" Gaussian than the "incorrect" one, first globally and then, if the
predicted class has enough calibration support, for that class as well.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from .costs import CostModel, macs_at_exit, macs_saved_fraction
from .errors import ContractError, DataError

SIGMA_FLOOR = 1e-3
MIN_SUPPORT = 5

GLOBAL_AND_CLASS = "global_pass+class_pass"
GLOBAL_NO_CLASS = "global_pass+no_class_stats"
FALLTHROUGH = "fallthrough_final"
ENTROPY_PASS = "entropy_pass"


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float
    count: int

    def pdf(self, x: float) -> float:
        return gaussian_pdf(x, self.mean, self.std)


def gaussian_pdf(x: float, mu: float, sigma: float) -> float:
    if not sigma > 0:
        raise ContractError(f"sigma must be positive, got {sigma}")
    z = (x - mu) / sigma
    return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


def fit_gaussian(values, sigma_floor: float = SIGMA_FLOOR) -> Optional[Gaussian]:
    """Mean and population standard deviation, floored; ``None`` for an empty sample."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return None
    return Gaussian(float(values.mean()), max(float(values.std()), sigma_floor), int(values.size))


@dataclass
class GateStats:
    """Correct/incorrect norm (and confidence) statistics for one exit."""

    correct: Optional[Gaussian]
    incorrect: Optional[Gaussian]
    conf_correct: Optional[Gaussian] = None
    conf_incorrect: Optional[Gaussian] = None
    # predicted class -> (correct, incorrect)
    per_class: Dict[int, tuple] = field(default_factory=dict)
    # predicted class -> (n_correct, n_incorrect), including unsupported classes
    class_counts: Dict[int, tuple] = field(default_factory=dict)


@dataclass
class NormStats:
    gates: List[GateStats]
    sigma_floor: float = SIGMA_FLOOR
    min_support: int = MIN_SUPPORT

    @property
    def num_exits(self) -> int:
        return len(self.gates)

    def to_dict(self) -> dict:
        def g(x):
            return None if x is None else asdict(x)

        return {
            "sigma_floor": self.sigma_floor,
            "min_support": self.min_support,
            "exits": [
                {
                    "exit": i,
                    "global": {"correct": g(s.correct), "incorrect": g(s.incorrect)},
                    "confidence": {"correct": g(s.conf_correct), "incorrect": g(s.conf_incorrect)},
                    "per_class": [
                        {"class": c, "correct": g(a), "incorrect": g(b)} for c, (a, b) in sorted(s.per_class.items())
                    ],
                    "class_counts": [
                        {"class": c, "correct": a, "incorrect": b} for c, (a, b) in sorted(s.class_counts.items())
                    ],
                }
                for i, s in enumerate(self.gates)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        def g(x):
            return None if x is None else Gaussian(float(x["mean"]), float(x["std"]), int(x["count"]))

        try:
            gates = []
            for e in d["exits"]:
                gates.append(
                    GateStats(
                        correct=g(e["global"]["correct"]),
                        incorrect=g(e["global"]["incorrect"]),
                        conf_correct=g(e.get("confidence", {}).get("correct")),
                        conf_incorrect=g(e.get("confidence", {}).get("incorrect")),
                        per_class={int(r["class"]): (g(r["correct"]), g(r["incorrect"])) for r in e["per_class"]},
                        class_counts={
                            int(r["class"]): (int(r["correct"]), int(r["incorrect"])) for r in e.get("class_counts", [])
                        },
                    )
                )
            return cls(gates, float(d["sigma_floor"]), int(d["min_support"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed norm statistics: {exc}", code="bad_stats") from exc


@dataclass(frozen=True)
class ExitSignals:
    """What the trigger may read at every exit for a batch: norms, logits, softmax."""

    norms: np.ndarray  # (N, B)
    logits: np.ndarray  # (N, B, C)

    @property
    def num_exits(self) -> int:
        return self.norms.shape[0]

    @property
    def num_samples(self) -> int:
        return self.norms.shape[1]

    def probabilities(self) -> np.ndarray:
        z = self.logits - self.logits.max(-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(-1, keepdims=True)

    def predictions(self) -> np.ndarray:
        return np.argmax(self.logits, axis=-1)


@torch.no_grad()
def exit_signals(model, X) -> ExitSignals:
    X = torch.as_tensor(X, dtype=torch.float64)
    out = model(X)
    norms = np.stack([n.numpy() for n in out.norms()])
    logits = np.stack([l.numpy() for l in out.logits])
    return ExitSignals(norms, logits)


def calibrate_signals(
    signals: ExitSignals,
    y,
    sigma_floor: float = SIGMA_FLOOR,
    min_support: int = MIN_SUPPORT,
    allow_missing: bool = False,
) -> NormStats:
    """Fit correct/incorrect statistics per exit, globally and per predicted class.

    Per-class statistics are keyed by the predicted class because that is what
    the gate can look up at inference time. Gate exits (all but the last) must
    have both correct and incorrect samples unless ``allow_missing`` is set, in
    which case a missing side is stored as ``None`` and treated as zero density.
    """
    y = np.asarray(y)
    if signals.num_samples == 0:
        raise ContractError("reference set is empty")
    preds = signals.predictions()
    conf = signals.probabilities().max(-1)
    gates = []
    for i in range(signals.num_exits):
        ok = preds[i] == y
        norms = signals.norms[i]
        stats = GateStats(
            correct=fit_gaussian(norms[ok], sigma_floor),
            incorrect=fit_gaussian(norms[~ok], sigma_floor),
            conf_correct=fit_gaussian(conf[i][ok], sigma_floor),
            conf_incorrect=fit_gaussian(conf[i][~ok], sigma_floor),
        )
        is_gate = i < signals.num_exits - 1
        if is_gate and not allow_missing and (stats.correct is None or stats.incorrect is None):
            side = "incorrect" if stats.incorrect is None else "correct"
            raise ContractError(
                f"exit {i} has no {side} predictions in the reference set; "
                "use a larger reference set or allow missing statistics"
            )
        for c in np.unique(preds[i]).tolist():
            sel = preds[i] == c
            n_ok, n_bad = int((sel & ok).sum()), int((sel & ~ok).sum())
            stats.class_counts[int(c)] = (n_ok, n_bad)
            if n_ok >= min_support and n_bad >= min_support:
                stats.per_class[int(c)] = (
                    fit_gaussian(norms[sel & ok], sigma_floor),
                    fit_gaussian(norms[sel & ~ok], sigma_floor),
                )
        gates.append(stats)
    return NormStats(gates, sigma_floor, min_support)


def calibrate(model, X, y, **kwargs) -> NormStats:
    """Calibrate norm statistics of ``model`` on a labeled reference set."""
    return calibrate_signals(exit_signals(model, X), y, **kwargs)


@dataclass(frozen=True)
class TriggerDecision:
    exit_taken: int
    predicted_class: int
    reason: str
    norm: float


def _more_likely_correct(x: float, correct: Optional[Gaussian], incorrect: Optional[Gaussian]) -> bool:
    p_ok = 0.0 if correct is None else correct.pdf(x)
    p_bad = 0.0 if incorrect is None else incorrect.pdf(x)
    return p_ok > p_bad


def decide_from_signals(
    signals: ExitSignals,
    j: int,
    stats: NormStats,
    class_specific: bool = True,
    use_confidence: bool = False,
) -> TriggerDecision:
    """Run the gate sequence for sample ``j``.

    ``class_specific=False`` gives the global-only strategy. ``use_confidence``
    additionally requires the softmax confidence to be more likely under the
    correct-confidence Gaussian.
    """
    N = signals.num_exits
    if stats.num_exits != N:
        raise ContractError(f"statistics cover {stats.num_exits} exits, model has {N}")
    conf = None
    if use_confidence:
        conf = ExitSignals(signals.norms[:, j : j + 1], signals.logits[:, j : j + 1]).probabilities().max(-1)[:, 0]
    for i in range(N - 1):
        norm = float(signals.norms[i, j])
        gate = stats.gates[i]
        if not _more_likely_correct(norm, gate.correct, gate.incorrect):
            continue
        if use_confidence and not _more_likely_correct(float(conf[i]), gate.conf_correct, gate.conf_incorrect):
            continue
        c_hat = int(np.argmax(signals.logits[i, j]))
        if not class_specific or c_hat not in gate.per_class:
            return TriggerDecision(i, c_hat, GLOBAL_NO_CLASS, norm)
        ok, bad = gate.per_class[c_hat]
        if _more_likely_correct(norm, ok, bad):
            return TriggerDecision(i, c_hat, GLOBAL_AND_CLASS, norm)
    last = N - 1
    return TriggerDecision(last, int(np.argmax(signals.logits[last, j])), FALLTHROUGH, float(signals.norms[last, j]))


def decide(model, stats: NormStats, x, class_specific: bool = True, use_confidence: bool = False) -> TriggerDecision:
    """Gate a single input ``x`` through the exits of ``model``."""
    x = torch.as_tensor(x, dtype=torch.float64).reshape(1, -1)
    return decide_from_signals(exit_signals(model, x), 0, stats, class_specific, use_confidence)


def softmax_entropy(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(-1, keepdims=True))
    p = np.exp(logp)
    return -(p * logp).sum(-1)


def check_entropy_thresholds(thresholds: Sequence[float], num_classes: int, num_gates: int) -> List[float]:
    th = [float(t) for t in thresholds]
    if len(th) != num_gates:
        raise ContractError(f"need {num_gates} entropy thresholds, got {len(th)}")
    hi = math.log(num_classes)
    for t in th:
        if not 0 < t < hi:
            raise ContractError(f"entropy threshold {t} outside (0, ln C = {hi:.4f})")
    return th


def entropy_decide_from_signals(signals: ExitSignals, j: int, thresholds: Sequence[float]) -> TriggerDecision:
    """Leave at the first gate whose softmax entropy is below its threshold."""
    N = signals.num_exits
    th = check_entropy_thresholds(thresholds, signals.logits.shape[-1], N - 1)
    for i in range(N - 1):
        if float(softmax_entropy(signals.logits[i, j])) < th[i]:
            return TriggerDecision(i, int(np.argmax(signals.logits[i, j])), ENTROPY_PASS, float(signals.norms[i, j]))
    last = N - 1
    return TriggerDecision(last, int(np.argmax(signals.logits[last, j])), FALLTHROUGH, float(signals.norms[last, j]))


def entropy_decide(model, thresholds: Sequence[float], x) -> TriggerDecision:
    x = torch.as_tensor(x, dtype=torch.float64).reshape(1, -1)
    return entropy_decide_from_signals(exit_signals(model, x), 0, thresholds)


@dataclass
class TriggerReport:
    strategy: str
    triggered: List[float]
    correct: List[float]  # fraction correct among samples leaving at each exit (nan if none)
    incorrect: List[float]
    counts: List[int]
    accuracy: float
    macs_saved: float
    mean_macs: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", "exit", "count", "triggered_pct", "correct_pct", "incorrect_pct"])
        for i, n in enumerate(self.counts):
            w.writerow(
                [
                    self.strategy,
                    i,
                    n,
                    f"{100 * self.triggered[i]:.4f}",
                    "" if math.isnan(self.correct[i]) else f"{100 * self.correct[i]:.4f}",
                    "" if math.isnan(self.incorrect[i]) else f"{100 * self.incorrect[i]:.4f}",
                ]
            )
        return buf.getvalue()


def summarize(decisions: Sequence[TriggerDecision], y, cost: CostModel, strategy: str) -> TriggerReport:
    """Aggregate per-sample decisions into triggered/correct fractions and MACs saved."""
    y = np.asarray(y)
    if len(decisions) == 0:
        raise ContractError("evaluation set is empty")
    N = cost.num_exits
    exits = np.array([d.exit_taken for d in decisions])
    hits = np.array([d.predicted_class for d in decisions]) == y
    counts = [int((exits == i).sum()) for i in range(N)]
    total = len(decisions)
    triggered = [n / total for n in counts]
    correct = [float(hits[exits == i].mean()) if counts[i] else math.nan for i in range(N)]
    incorrect = [1.0 - c if counts[i] else math.nan for i, c in enumerate(correct)]
    saved = sum(triggered[i] * macs_saved_fraction(cost, i) for i in range(N))
    mean_macs = float(np.mean([macs_at_exit(cost, int(e)) for e in exits]))
    return TriggerReport(strategy, triggered, correct, incorrect, counts, float(hits.mean()), saved, mean_macs)


def evaluate_trigger(
    model,
    X,
    y,
    cost: CostModel,
    stats: Optional[NormStats] = None,
    thresholds: Optional[Sequence[float]] = None,
    strategy: str = "class",
    use_confidence: bool = False,
) -> TriggerReport:
    """Run a strategy over a labeled set.

    ``strategy`` is ``"class"`` (global then class-specific norm gate),
    ``"global"`` (global norm gate only), ``"entropy"`` (needs ``thresholds``)
    or ``"exit<i>"`` (always leave at exit ``i``).
    """
    signals = exit_signals(model, X)
    decisions = decide_all(signals, strategy, stats, thresholds, use_confidence)
    return summarize(decisions, y, cost, strategy)


def decide_all(
    signals: ExitSignals,
    strategy: str,
    stats: Optional[NormStats] = None,
    thresholds: Optional[Sequence[float]] = None,
    use_confidence: bool = False,
) -> List[TriggerDecision]:
    B = signals.num_samples
    if strategy in ("class", "global"):
        if stats is None:
            raise ContractError(f"strategy {strategy!r} needs norm statistics")
        return [decide_from_signals(signals, j, stats, strategy == "class", use_confidence) for j in range(B)]
    if strategy == "entropy":
        if thresholds is None:
            raise ContractError("entropy strategy needs thresholds")
        return [entropy_decide_from_signals(signals, j, thresholds) for j in range(B)]
    if strategy.startswith("exit"):
        i = int(strategy[4:])
        if not 0 <= i < signals.num_exits:
            raise ContractError(f"no exit {i}")
        preds = signals.predictions()
        return [TriggerDecision(i, int(preds[i, j]), "fixed_exit", float(signals.norms[i, j])) for j in range(B)]
    raise ContractError(f"unknown strategy {strategy!r}")


def stats_to_json(stats: NormStats) -> str:
    return json.dumps(stats.to_dict(), indent=2)

