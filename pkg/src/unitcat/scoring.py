"""Verification back-end: cosine trial scoring and detection metrics.

The decision rule is fixed as accept iff score >= threshold, so
FAR(t) = |{nontarget >= t}| / |nontarget| and FRR(t) = |{target < t}| /
|target|. Rates are evaluated at every distinct score plus -inf/+inf
sentinels; the equal-error rate interpolates linearly on that polyline,
and the detection cost is minimized exactly over the same sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tdnn import average_embeddings

DEFAULT_P_TARGET = 0.01


class ScoringError(ValueError):
    pass


@dataclass
class Trial:
    enroll_id: str
    test_id: str
    is_target: bool


@dataclass
class ScoreSet:
    scores: np.ndarray
    is_target: np.ndarray

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.is_target = np.asarray(self.is_target, dtype=bool)
        if self.scores.shape != self.is_target.shape:
            raise ScoringError(
                f"{len(self.scores)} scores but {len(self.is_target)} labels"
            )

    def __len__(self) -> int:
        return len(self.scores)

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        """(target scores, nontarget scores); both must be non-empty."""
        targets = self.scores[self.is_target]
        nontargets = self.scores[~self.is_target]
        if len(targets) == 0 or len(nontargets) == 0:
            raise ScoringError(
                "metrics need at least one target and one nontarget score"
            )
        return targets, nontargets


@dataclass
class DetMetrics:
    eer: float
    eer_threshold: float
    min_dcf: float
    dcf_threshold: float
    roc: list[tuple[float, float, float]]  # (threshold, FAR, FRR)


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ScoringError("cosine of a zero-norm vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def sweep_rates(s: ScoreSet) -> list[tuple[float, float, float]]:
    """(threshold, FAR, FRR) at all distinct scores and both sentinels,
    thresholds ascending."""
    targets, nontargets = s.split()
    t_sorted = np.sort(targets)
    nt_sorted = np.sort(nontargets)
    thresholds = np.concatenate(
        [[-math.inf], np.unique(s.scores), [math.inf]]
    )
    far = (len(nt_sorted) - np.searchsorted(nt_sorted, thresholds, side="left")) / len(
        nt_sorted
    )
    frr = np.searchsorted(t_sorted, thresholds, side="left") / len(t_sorted)
    return [(float(t), float(fa), float(fr)) for t, fa, fr in zip(thresholds, far, frr)]


def compute_eer(s: ScoreSet) -> tuple[float, float]:
    """Equal-error rate and its threshold, interpolating between sweep
    points where FAR - FRR changes sign."""
    points = sweep_rates(s)
    for (t0, far0, frr0), (t1, far1, frr1) in zip(points, points[1:]):
        d0 = far0 - frr0
        d1 = far1 - frr1
        if d0 < 0:  # crossing is before this segment; d starts at +1
            continue
        if d1 > 0:
            continue
        if d0 == d1 == 0.0:
            return frr0, t0
        alpha = d0 / (d0 - d1)
        eer = far0 + alpha * (far1 - far0)
        if math.isinf(t0) or math.isinf(t1):
            threshold = t1 if math.isinf(t0) else t0
        else:
            threshold = t0 + alpha * (t1 - t0)
        return float(eer), float(threshold)
    raise ScoringError("no FAR/FRR crossing found")  # unreachable for valid sets


def compute_min_dcf(
    s: ScoreSet,
    p_target: float = DEFAULT_P_TARGET,
    c_miss: float = 1.0,
    c_fa: float = 1.0,
) -> tuple[float, float]:
    """Minimum normalized detection cost over the sweep thresholds.

    DCF(t) = c_miss*p_target*FRR(t) + c_fa*(1-p_target)*FAR(t), divided by
    the best uninformed-decision cost; ties keep the lowest threshold.
    """
    if not 0.0 < p_target < 1.0:
        raise ScoringError(f"p_target must be in (0, 1), got {p_target}")
    if c_miss <= 0 or c_fa <= 0:
        raise ScoringError("costs must be positive")
    best_cost = math.inf
    best_threshold = -math.inf
    for threshold, far, frr in sweep_rates(s):
        cost = c_miss * p_target * frr + c_fa * (1.0 - p_target) * far
        if cost < best_cost:
            best_cost = cost
            best_threshold = threshold
    normalizer = min(c_miss * p_target, c_fa * (1.0 - p_target))
    return float(best_cost / normalizer), float(best_threshold)


def compute_det_metrics(
    s: ScoreSet,
    p_target: float = DEFAULT_P_TARGET,
    c_miss: float = 1.0,
    c_fa: float = 1.0,
) -> DetMetrics:
    eer, eer_t = compute_eer(s)
    dcf, dcf_t = compute_min_dcf(s, p_target, c_miss, c_fa)
    return DetMetrics(eer, eer_t, dcf, dcf_t, sweep_rates(s))


def score_trials(
    trials: list[Trial], embeddings: dict[str, list[np.ndarray]]
) -> ScoreSet:
    """One cosine score per trial; ids with several records (one per
    channel) are represented by their averaged embedding."""
    vectors: dict[str, np.ndarray] = {}

    def resolve(utt_id: str, lineno: int) -> np.ndarray:
        if utt_id not in vectors:
            records = embeddings.get(utt_id)
            if not records:
                raise ScoringError(f"trial {lineno}: no embedding for id {utt_id!r}")
            vectors[utt_id] = average_embeddings([r.reshape(-1) for r in records])
        return vectors[utt_id]

    scores = []
    labels = []
    for i, trial in enumerate(trials, start=1):
        a = resolve(trial.enroll_id, i)
        b = resolve(trial.test_id, i)
        scores.append(cosine_score(a, b))
        labels.append(trial.is_target)
    return ScoreSet(np.asarray(scores), np.asarray(labels))


# --- text formats ---------------------------------------------------------


def parse_trials(text: str) -> list[Trial]:
    """Lines of: enroll_id test_id target|nontarget."""
    trials = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ScoringError(f"trials line {lineno}: expected 3 fields, got {len(fields)}")
        enroll, test, label = fields
        if label not in ("target", "nontarget"):
            raise ScoringError(
                f"trials line {lineno}: label must be target or nontarget, got {label!r}"
            )
        trials.append(Trial(enroll, test, label == "target"))
    return trials


def load_trials(path: str | Path) -> list[Trial]:
    return parse_trials(Path(path).read_text(encoding="utf-8"))


def format_scores(trials: list[Trial], s: ScoreSet) -> str:
    lines = [
        f"{t.enroll_id} {t.test_id} {score:.17g} "
        f"{'target' if is_target else 'nontarget'}"
        for t, score, is_target in zip(trials, s.scores, s.is_target)
    ]
    return "".join(line + "\n" for line in lines)


def parse_scores(text: str) -> ScoreSet:
    """Lines of: enroll_id test_id score label."""
    scores = []
    labels = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ScoringError(f"scores line {lineno}: expected 4 fields, got {len(fields)}")
        try:
            scores.append(float(fields[2]))
        except ValueError:
            raise ScoringError(f"scores line {lineno}: bad score {fields[2]!r}") from None
        if fields[3] not in ("target", "nontarget"):
            raise ScoringError(f"scores line {lineno}: bad label {fields[3]!r}")
        labels.append(fields[3] == "target")
    return ScoreSet(np.asarray(scores), np.asarray(labels))


def format_roc(points: list[tuple[float, float, float]]) -> str:
    lines = ["threshold\tfar\tfrr"]
    lines += [f"{t:.17g}\t{fa:.17g}\t{fr:.17g}" for t, fa, fr in points]
    return "".join(line + "\n" for line in lines)


def roc_svg(points: list[tuple[float, float, float]], title: str = "DET") -> str:
    """A standalone SVG of the FAR/FRR trade-off polyline."""
    size, margin = 400, 45
    span = size - 2 * margin

    def px(far: float) -> float:
        return margin + far * span

    def py(frr: float) -> float:
        return size - margin - frr * span

    coords = sorted((fa, fr) for _, fa, fr in points)
    path = " ".join(f"{px(fa):.2f},{py(fr):.2f}" for fa, fr in coords)
    grid = []
    for i in range(5):
        v = i / 4
        grid.append(
            f'<line x1="{px(v):.1f}" y1="{py(0):.1f}" x2="{px(v):.1f}" '
            f'y2="{py(1):.1f}" stroke="#ddd"/>'
        )
        grid.append(
            f'<line x1="{px(0):.1f}" y1="{py(v):.1f}" x2="{px(1):.1f}" '
            f'y2="{py(v):.1f}" stroke="#ddd"/>'
        )
        grid.append(
            f'<text x="{px(v):.1f}" y="{size - margin + 16}" font-size="10" '
            f'text-anchor="middle">{v:g}</text>'
        )
        grid.append(
            f'<text x="{margin - 8}" y="{py(v) + 3:.1f}" font-size="10" '
            f'text-anchor="end">{v:g}</text>'
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">\n'
        f'<rect width="{size}" height="{size}" fill="white"/>\n'
        + "\n".join(grid)
        + f'\n<polyline points="{path}" fill="none" stroke="#c33" stroke-width="1.5"/>\n'
        f'<text x="{size / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>\n'
        f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-size="11">'
        f"false alarm rate</text>\n"
        f'<text x="12" y="{size / 2}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 12 {size / 2})">false reject rate</text>\n'
        "</svg>\n"
    )
