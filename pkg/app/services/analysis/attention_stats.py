"""
Attention weight distribution analysis.

For every evaluated context of an attention model the context-level weight of
a term group is the sum of the attention probabilities of the terms in that
group. Weights are collected separately for sentiment (S: gold pos/neg) and
neutral (N: gold neu) contexts and compared per group with:
- the two-sample Kolmogorov-Smirnov statistic D over empirical CDFs
- the difference of sample means (S minus N)
- Gaussian kernel density tables for plotting
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm

from app.services.encoders.models import ContextModel
from app.services.evaluation.scoring import DocumentPairs
from app.utils.context_parser import Term, TermGroup
from app.utils.document_processor import Label

logger = logging.getLogger(__name__)

SENTIMENT_SET = "S"
NEUTRAL_SET = "N"
FALLBACK_BANDWIDTH = 0.01


class AnalysisGroup(str, Enum):
    FRAMES = "frames"
    NOUNS = "nouns"
    PREP = "prep"
    SENTIMENT = "sentiment"
    VERBS = "verbs"


DEFAULT_RANGES: Dict[AnalysisGroup, Tuple[float, float]] = {
    AnalysisGroup.FRAMES: (0.0, 0.4),
    AnalysisGroup.NOUNS: (0.0, 0.5),
    AnalysisGroup.PREP: (0.0, 0.2),
    AnalysisGroup.SENTIMENT: (0.0, 0.4),
    AnalysisGroup.VERBS: (0.0, 0.5),
}

POS_GROUPS = {"noun": AnalysisGroup.NOUNS, "verb": AnalysisGroup.VERBS, "prep": AnalysisGroup.PREP}


class TermGrouper:
    """Assigns terms to analysis groups; sentiment lexicon entries are never nouns or verbs."""

    def __init__(self, pos_table: Optional[Mapping[str, str]] = None, sentiment_lexicon: Optional[Mapping[str, Label]] = None):
        self.pos_table = dict(pos_table or {})
        self.sentiment_lexicon = dict(sentiment_lexicon or {})

    def group_of(self, term: Term) -> Optional[AnalysisGroup]:
        if term.group is TermGroup.FRAME:
            return AnalysisGroup.FRAMES
        if term.group is not TermGroup.WORD:
            return None
        if term.surface in self.sentiment_lexicon:
            return AnalysisGroup.SENTIMENT
        return POS_GROUPS.get(self.pos_table.get(term.surface, "unknown"))


@dataclass
class GroupWeightSample:
    context_id: str
    group: AnalysisGroup
    weight: float
    polarity_class: str


def context_group_weight(
    alpha: np.ndarray,
    terms: Sequence[Term],
    group: AnalysisGroup,
    grouper: TermGrouper,
) -> float:
    """Sum of alpha over the positions whose term belongs to `group`."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape[0] < len(terms):
        raise ValueError(f"{alpha.shape[0]} attention weights for {len(terms)} terms")
    return float(sum(alpha[i] for i, term in enumerate(terms) if grouper.group_of(term) is group))


def _check_sample(sample: Sequence[float], name: str = "sample") -> np.ndarray:
    values = np.asarray(sample, dtype=np.float64)
    if values.size == 0:
        raise ValueError(f"Empty {name}")
    return np.sort(values)


def ecdf(sample: Sequence[float]) -> Callable:
    """F(x) = fraction of the sample strictly below x."""
    values = _check_sample(sample)

    def cdf(x):
        return np.searchsorted(values, x, side="left") / values.size

    return cdf


def ks_statistic(sample_s: Sequence[float], sample_n: Sequence[float]) -> float:
    """
    sup_x |F_S(x) - F_N(x)|, evaluated exactly at every sample point from both
    sides (fraction below x and fraction at or below x).
    """
    s = _check_sample(sample_s, "sentiment sample")
    n = _check_sample(sample_n, "neutral sample")
    points = np.union1d(s, n)
    below = np.abs(np.searchsorted(s, points, "left") / s.size - np.searchsorted(n, points, "left") / n.size)
    at_or_below = np.abs(np.searchsorted(s, points, "right") / s.size - np.searchsorted(n, points, "right") / n.size)
    return float(max(below.max(), at_or_below.max()))


def delta_mean(sample_s: Sequence[float], sample_n: Sequence[float]) -> float:
    return float(_check_sample(sample_s, "sentiment sample").mean() - _check_sample(sample_n, "neutral sample").mean())


def silverman_bandwidth(sample: Sequence[float]) -> float:
    values = _check_sample(sample)
    if values.size < 2:
        return FALLBACK_BANDWIDTH
    std = values.std(ddof=1)
    iqr = np.subtract(*np.percentile(values, [75, 25]))
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    bandwidth = 0.9 * spread * values.size ** (-0.2)
    return float(bandwidth) if bandwidth > 0 else FALLBACK_BANDWIDTH


def kde_table(
    sample: Sequence[float],
    bandwidth: Optional[float] = None,
    x_range: Tuple[float, float] = (0.0, 1.0),
    points: int = 200,
) -> pd.DataFrame:
    """Gaussian kernel density on a uniform grid; columns x, density."""
    values = _check_sample(sample)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(values)
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if points < 2 or x_range[1] <= x_range[0]:
        raise ValueError(f"Invalid grid: range {x_range} with {points} points")
    grid = np.linspace(x_range[0], x_range[1], points)
    density = norm.pdf((grid[:, None] - values[None, :]) / bandwidth).mean(axis=1) / bandwidth
    return pd.DataFrame({"x": grid, "density": density})


@dataclass
class AnalysisReport:
    kind: str
    ks: Dict[AnalysisGroup, float] = field(default_factory=dict)
    delta: Dict[AnalysisGroup, float] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)
    kde: Dict[Tuple[AnalysisGroup, str], pd.DataFrame] = field(default_factory=dict)
    samples: List[GroupWeightSample] = field(default_factory=list)
    heatmap: List[Tuple[str, int, str, str, float]] = field(default_factory=list)

    def text(self) -> str:
        lines = [
            f"Attention analysis ({self.kind})",
            f"contexts: S={self.counts.get(SENTIMENT_SET, 0)} N={self.counts.get(NEUTRAL_SET, 0)}",
            "",
            "group\tD",
        ]
        lines += [f"{g.value}\t{self._fmt(self.ks.get(g))}" for g in AnalysisGroup]
        lines += ["", "group\tdelta"]
        lines += [f"{g.value}\t{self._fmt(self.delta.get(g))}" for g in AnalysisGroup]
        return "\n".join(lines) + "\n"

    @staticmethod
    def _fmt(value: Optional[float]) -> str:
        return "n/a" if value is None else f"{value:.6f}"

    def write(self, out_dir: Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(self.text(), encoding="utf-8")
        for (group, polarity_class), table in self.kde.items():
            table.to_csv(out_dir / f"{group.value}_{polarity_class}.tsv", sep="\t", header=False, index=False, float_format="%.6f")
        heatmap = pd.DataFrame(self.heatmap, columns=["context_id", "position", "term", "group", "weight"])
        heatmap.to_csv(out_dir / "heatmaps.tsv", sep="\t", index=False, float_format="%.6f")
        logger.info(f"Wrote analysis report and {len(self.kde)} KDE tables to {out_dir}")
        return out_dir / "report.txt"


def compare_groups(
    samples: Sequence[GroupWeightSample],
    report: AnalysisReport,
    ranges: Optional[Mapping[AnalysisGroup, Tuple[float, float]]] = None,
    points: int = 200,
    bandwidth: Optional[float] = None,
) -> AnalysisReport:
    """Fill D, delta and KDE tables of `report` from grouped weight samples."""
    ranges = {**DEFAULT_RANGES, **(ranges or {})}
    by_key: Dict[Tuple[AnalysisGroup, str], List[float]] = defaultdict(list)
    for sample in samples:
        by_key[(sample.group, sample.polarity_class)].append(sample.weight)
    for group in AnalysisGroup:
        s, n = by_key.get((group, SENTIMENT_SET)), by_key.get((group, NEUTRAL_SET))
        if not s or not n:
            logger.warning(f"Group '{group.value}' lacks S or N contexts; statistics skipped")
        else:
            report.ks[group] = ks_statistic(s, n)
            report.delta[group] = delta_mean(s, n)
        for polarity_class, sample in ((SENTIMENT_SET, s), (NEUTRAL_SET, n)):
            if sample:
                report.kde[(group, polarity_class)] = kde_table(sample, bandwidth, ranges[group], points)
    return report


class AttentionAnalyzer:
    """Collects context-level group weights of an attention model over evaluation contexts."""

    def __init__(
        self,
        model: ContextModel,
        grouper: TermGrouper,
        ranges: Optional[Mapping[AnalysisGroup, Tuple[float, float]]] = None,
        points: int = 200,
        bandwidth: Optional[float] = None,
    ):
        if not model.kind.has_attention:
            raise ValueError(f"Model kind '{model.kind.value}' has no attention weights to analyze")
        self.model = model
        self.grouper = grouper
        self.ranges = ranges
        self.points = points
        self.bandwidth = bandwidth

    def analyze(self, documents: Sequence[DocumentPairs]) -> AnalysisReport:
        report = AnalysisReport(self.model.kind.value)
        counts = {SENTIMENT_SET: 0, NEUTRAL_SET: 0}
        for document in documents:
            for pair, label in document.gold.items():
                polarity_class = NEUTRAL_SET if label is Label.NEUTRAL else SENTIMENT_SET
                for context, embedding in document.contexts.get(pair, []):
                    context_id = f"{document.doc_id}:{pair[0]}:{pair[1]}:{context.sentence_id}"
                    alpha = self.model.attention(embedding).averaged()
                    counts[polarity_class] += 1
                    for group in AnalysisGroup:
                        report.samples.append(GroupWeightSample(
                            context_id, group, context_group_weight(alpha, context.terms, group, self.grouper),
                            polarity_class,
                        ))
                    peak = float(alpha.max())
                    for i, term in enumerate(context.terms):
                        group = self.grouper.group_of(term)
                        report.heatmap.append((
                            context_id, i, term.surface, group.value if group else "-",
                            float(alpha[i]) / peak if peak > 0 else 0.0,
                        ))
        report.counts = counts
        logger.info(f"Collected group weights of {counts[SENTIMENT_SET]} S and {counts[NEUTRAL_SET]} N contexts")
        return compare_groups(report.samples, report, self.ranges, self.points, self.bandwidth)
