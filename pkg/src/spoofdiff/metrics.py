"""Biometric error rates: APCER / BPCER / ACER at a threshold, EER via an
exhaustive candidate sweep, and HTER at an externally fixed threshold.

Scores are oriented higher = more genuine. The tie rule is fixed: a score
exactly at the threshold counts as accepted (classified genuine).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GENUINE = "genuine"
SPOOF = "spoof"


@dataclass
class ScoreSet:
    scores: np.ndarray
    labels: list[str]

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1 or len(self.labels) != self.scores.shape[0]:
            raise ValueError("scores and labels must be parallel 1-D sequences")
        bad = set(self.labels) - {GENUINE, SPOOF}
        if bad:
            raise ValueError(f"unknown labels: {sorted(bad)}")

    @property
    def genuine(self) -> np.ndarray:
        mask = np.fromiter((l == GENUINE for l in self.labels), bool, len(self.labels))
        return self.scores[mask]

    @property
    def spoof(self) -> np.ndarray:
        mask = np.fromiter((l == SPOOF for l in self.labels), bool, len(self.labels))
        return self.scores[mask]

    def require_both_classes(self) -> None:
        if self.genuine.size == 0 or self.spoof.size == 0:
            raise ValueError("score set must contain both genuine and spoof samples")


def apcer_bpcer(score_set: ScoreSet, threshold: float) -> tuple[float, float]:
    """Attack-accept rate and genuine-reject rate at ``threshold``.

    apcer: fraction of spoof samples with score >= threshold (attack accepted).
    bpcer: fraction of genuine samples with score < threshold (genuine rejected).
    """
    score_set.require_both_classes()
    apcer = float(np.mean(score_set.spoof >= threshold))
    bpcer = float(np.mean(score_set.genuine < threshold))
    return apcer, bpcer


def acer(score_set: ScoreSet, threshold: float) -> float:
    a, b = apcer_bpcer(score_set, threshold)
    return (a + b) / 2.0


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints between adjacent sorted unique scores, plus -inf and +inf."""
    uniq = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    return np.concatenate(([-np.inf], mids, [np.inf]))


def far_frr(score_set: ScoreSet, threshold: float) -> tuple[float, float]:
    """FAR = apcer (attacks accepted), FRR = bpcer (genuine rejected)."""
    return apcer_bpcer(score_set, threshold)


def eer(score_set: ScoreSet) -> tuple[float, float]:
    """Equal error rate and the threshold attaining it.

    Sweeps every candidate threshold, picks the minimizer of |FAR - FRR|
    (lowest threshold on ties) and reports (FAR + FRR) / 2 there.
    """
    score_set.require_both_classes()
    best = None
    for thr in candidate_thresholds(score_set.scores):
        far, frr = far_frr(score_set, float(thr))
        gap = abs(far - frr)
        if best is None or gap < best[0]:
            best = (gap, (far + frr) / 2.0, float(thr))
    return best[1], best[2]


def hter(score_set: ScoreSet, threshold: float) -> float:
    """(FAR + FRR) / 2 at a threshold fixed elsewhere (e.g. a source dev set)."""
    far, frr = far_frr(score_set, threshold)
    return (far + frr) / 2.0


def sweep_table(score_set: ScoreSet) -> list[tuple[float, float, float]]:
    """(threshold, FAR, FRR) at every candidate threshold, ascending."""
    rows = []
    for thr in candidate_thresholds(score_set.scores):
        far, frr = far_frr(score_set, float(thr))
        rows.append((float(thr), far, frr))
    return rows


@dataclass
class MetricsReport:
    """Error rates at the operating threshold, plus the threshold itself.

    acer is maintained as exactly (apcer + bpcer) / 2.
    """

    apcer: float
    bpcer: float
    acer: float
    eer: float
    hter: float
    threshold: float

    def __post_init__(self):
        for name in ("apcer", "bpcer", "acer", "eer", "hter"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.acer != (self.apcer + self.bpcer) / 2.0:
            raise ValueError("acer must equal (apcer + bpcer) / 2 exactly")

    FIELDS = ("apcer", "bpcer", "acer", "eer", "hter", "threshold")

    def to_text(self) -> str:
        lines = [f"{name} = {getattr(self, name):.17g}" for name in self.FIELDS]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        values = {}
        for line in text.strip().splitlines():
            key, _, raw = line.partition("=")
            values[key.strip()] = float(raw.strip())
        return cls(**{name: values[name] for name in cls.FIELDS})

    def to_row(self) -> str:
        return "\t".join(f"{getattr(self, name):.17g}" for name in self.FIELDS)

    @classmethod
    def header_row(cls) -> str:
        return "\t".join(cls.FIELDS)


def evaluate_at_threshold(score_set: ScoreSet, threshold: float) -> MetricsReport:
    """Full report on one score set: APCER/BPCER/ACER/HTER at ``threshold``,
    EER from the set's own sweep."""
    a, b = apcer_bpcer(score_set, threshold)
    e, _ = eer(score_set)
    return MetricsReport(apcer=a, bpcer=b, acer=(a + b) / 2.0, eer=e,
                         hter=(a + b) / 2.0, threshold=threshold)
