"""Spatial and sequential consistency of eye movements across subjects."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .aoi import (
    AoiString,
    assign_scanpaths,
    discover_aois,
    extend_aois,
    random_aoi_strings,
)
from .core import FixationRecord, FixationSet, GazeError, empirical_frame_map


class InsufficientSubjects(GazeError):
    pass


class NoEligibleFrames(GazeError):
    pass


class InsufficientStrings(GazeError):
    pass


class EmptyTransitionRow(ZeroDivisionError):
    """An unsmoothed Markov row with no outgoing transitions."""


# ---------------------------------------------------------------- ROC

@dataclass
class RocResult:
    auc: float
    curve: np.ndarray  # (m, 2) columns fpr, tpr
    n_samples: int


def auc_from_scores(pos: np.ndarray, neg: np.ndarray) -> float:
    """Tie-corrected area under the ROC curve (ties between classes count one half)."""
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.sort(np.asarray(neg, dtype=np.float64).ravel())
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs both positives and negatives")
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    return float((below.sum() + 0.5 * (upto - below).sum()) / (pos.size * neg.size))


def roc_curve(pos: np.ndarray, neg: np.ndarray, max_points: int = 1001) -> np.ndarray:
    """ROC points (fpr, tpr) from (1, 1) thresholds down, thinned to ``max_points``."""
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    thr = np.unique(np.concatenate([pos, neg]))[::-1]
    ps, ns = np.sort(pos), np.sort(neg)
    tpr = (ps.size - np.searchsorted(ps, thr, side="left")) / ps.size
    fpr = (ns.size - np.searchsorted(ns, thr, side="left")) / ns.size
    curve = np.vstack([[0.0, 0.0], np.column_stack([fpr, tpr])])
    if len(curve) > max_points:
        keep = np.unique(np.linspace(0, len(curve) - 1, max_points).round().astype(int))
        curve = curve[keep]
    if not np.allclose(curve[-1], (1.0, 1.0)):
        curve = np.vstack([curve, [1.0, 1.0]])
    return curve


def _cell(x: float, y: float, scale: float, shape: tuple[int, int]) -> tuple[int, int]:
    w, h = shape
    col = min(max(int(round(x / scale)), 0), w - 1)
    row = min(max(int(round(y / scale)), 0), h - 1)
    return row, col


# ---------------------------------------------------------------- spatial agreement

def _frame_subjects(fixations: FixationSet, group: str | None = None) -> dict[tuple[str, int], dict[str, FixationRecord]]:
    """(video, frame) -> subject -> the subject's first fixation on that frame."""
    out: dict[tuple[str, int], dict[str, FixationRecord]] = {}
    for r in fixations.records:
        if group is not None and r.group != group:
            continue
        for f in range(r.start_frame, r.end_frame + 1):
            out.setdefault((r.video_id, f), {}).setdefault(r.subject_id, r)
    return out


def skip_frames(fps: float, skip_ms: float) -> int:
    return int(math.ceil(skip_ms * fps / 1000.0 - 1e-9))


def spatial_agreement(
    fixations: FixationSet,
    pairing: str = "same_stimulus",
    n_samples: int = 1000,
    sigma: float | None = None,
    skip_ms: float = 200.0,
    rng_seed: int = 0,
    downsample: int = 1,
    pooling: str = "pooled",
) -> RocResult:
    """Leave-one-subject-out prediction of fixations from the other subjects' blurred fixations.

    ``sigma`` is in video pixels and defaults to each video's fovea radius.
    With ``cross_stimulus`` the predictor comes from a frame of a different
    video, rescaled to the test frame. ``pooling`` is ``pooled`` (one ROC
    over all tests) or ``per_frame`` (mean of per-test AUCs).
    """
    if pairing not in ("same_stimulus", "cross_stimulus"):
        raise ValueError(f"unknown pairing {pairing!r}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    subjects_at = _frame_subjects(fixations)
    if len(fixations.subjects) < 2:
        raise InsufficientSubjects("need at least two subjects")
    eligible = sorted(
        key
        for key, subs in subjects_at.items()
        if len(subs) >= 2 and key[1] >= skip_frames(fixations.videos[key[0]].fps, skip_ms)
    )
    if not eligible:
        raise NoEligibleFrames("no frame has two subjects after the skip window")
    if pairing == "cross_stimulus" and len({v for v, _ in eligible}) < 2:
        raise NoEligibleFrames("cross-stimulus control needs eligible frames on two videos")
    rng = np.random.default_rng(rng_seed)
    positives, negatives, per_test = [], [], []
    for _ in range(n_samples):
        vid, frame = eligible[rng.integers(len(eligible))]
        test_subs = subjects_at[(vid, frame)]
        meta = fixations.videos[vid]
        if pairing == "same_stimulus":
            train_subs, train_meta = test_subs, meta
        else:
            while True:
                v2, f2 = eligible[rng.integers(len(eligible))]
                if v2 != vid:
                    break
            train_subs, train_meta = subjects_at[(v2, f2)], fixations.videos[v2]
        shape = meta.grid_shape(downsample)
        sx, sy = meta.width / train_meta.width, meta.height / train_meta.height
        sig = (sigma if sigma is not None else meta.fovea_px) / downsample
        for subj in sorted(test_subs):
            pts = [(r.x * sx / downsample, r.y * sy / downsample) for s, r in sorted(train_subs.items()) if s != subj]
            if not pts:
                continue
            grid = empirical_frame_map(pts, shape, sig).values
            rec = test_subs[subj]
            row, col = _cell(rec.x, rec.y, downsample, shape)
            mask = np.ones(grid.shape, dtype=bool)
            mask[row, col] = False
            pos, neg = grid[row, col], grid[mask]
            positives.append(pos)
            if pooling == "pooled":
                negatives.append(neg)
            else:
                per_test.append(auc_from_scores([pos], neg))
    if not positives:
        raise NoEligibleFrames("no test subject had training fixations")
    if pooling == "per_frame":
        return RocResult(float(np.mean(per_test)), np.array([[0.0, 0.0], [1.0, 1.0]]), len(per_test))
    neg = np.concatenate(negatives)
    return RocResult(auc_from_scores(positives, neg), roc_curve(positives, neg), len(positives))


# ---------------------------------------------------------------- task influence

def pvalue_of_cell(grid: np.ndarray, row: int, col: int) -> float:
    """Probability mass of cells whose density does not exceed the density at (row, col)."""
    d = grid[row, col]
    return float(grid[grid <= d].sum())


def task_influence_pvalues(
    active: FixationSet,
    free: FixationSet,
    n_frames: int = 1000,
    sigma: float | None = None,
    rng_seed: int = 0,
    downsample: int = 1,
) -> dict[str, float]:
    """Mean p-value per free-viewing subject of their fixations under the active-group map."""
    act = _frame_subjects(active)
    frees = _frame_subjects(free)
    shared = sorted(set(act) & set(frees))
    if not shared:
        raise NoEligibleFrames("no frame is fixated by both groups")
    rng = np.random.default_rng(rng_seed)
    sums: dict[str, list[float]] = {}
    for _ in range(n_frames):
        vid, frame = shared[rng.integers(len(shared))]
        meta = active.videos[vid]
        shape = meta.grid_shape(downsample)
        sig = (sigma if sigma is not None else meta.fovea_px) / downsample
        pts = [(r.x / downsample, r.y / downsample) for _, r in sorted(act[(vid, frame)].items())]
        grid = empirical_frame_map(pts, shape, sig).values
        for subj, rec in sorted(frees[(vid, frame)].items()):
            row, col = _cell(rec.x, rec.y, downsample, shape)
            sums.setdefault(subj, []).append(pvalue_of_cell(grid, row, col))
    return {s: float(np.mean(v)) for s, v in sorted(sums.items())}


# ---------------------------------------------------------------- Markov dynamics

@dataclass
class MarkovModel:
    A: int
    transition: np.ndarray  # transition[a-1, b-1] = p(b | a)
    laplace_add: float

    def prob(self, a: int, b: int) -> float:
        return float(self.transition[a - 1, b - 1])


def transition_counts(strings: list[AoiString], A: int) -> np.ndarray:
    counts = np.zeros((A, A))
    for s in strings:
        for a, b in zip(s.symbols[:-1], s.symbols[1:]):
            counts[a - 1, b - 1] += 1
    return counts


def markov_fit(strings: list[AoiString], A: int, laplace_add: float = 1.0) -> MarkovModel:
    """First-order transition matrix with additive (Laplace) smoothing."""
    if A < 1:
        raise ValueError("A must be >= 1")
    if laplace_add < 0:
        raise ValueError("laplace_add must be >= 0")
    counts = transition_counts(strings, A) + laplace_add
    rows = counts.sum(axis=1, keepdims=True)
    if (rows == 0).any():
        empty = [int(i) + 1 for i in np.nonzero(rows.ravel() == 0)[0]]
        raise EmptyTransitionRow(f"AOIs {empty} have no outgoing transitions and no smoothing")
    return MarkovModel(A, counts / rows, laplace_add)


def string_log_likelihood(model: MarkovModel, symbols: list[int]) -> float:
    # the first (central) fixation has probability 1; an impossible transition scores -inf
    probs = [model.prob(a, b) for a, b in zip(symbols[:-1], symbols[1:])]
    if any(p <= 0.0 for p in probs):
        return -math.inf
    return float(sum(math.log(p) for p in probs))


def markov_scores(strings: list[AoiString], A: int, laplace_add: float = 1.0) -> list[float]:
    """Leave-one-out per-string scores: geometric-mean transition probability."""
    if len(strings) < 2:
        raise InsufficientStrings("need at least two strings")
    scores = []
    for i, held in enumerate(strings):
        if len(held.symbols) < 2:
            scores.append(1.0)
            continue
        model = markov_fit(strings[:i] + strings[i + 1 :], A, laplace_add)
        ll = string_log_likelihood(model, held.symbols)
        scores.append(math.exp(ll / (len(held.symbols) - 1)))
    return scores


def markov_consistency(strings: list[AoiString], A: int, laplace_add: float = 1.0) -> float:
    return float(np.mean(markov_scores(strings, A, laplace_add)))


# ---------------------------------------------------------------- temporal alignment

def align_score(f: list[int], g: list[int], match: float = 1.0, mismatch: float = 0.0, gap: float = 0.0) -> tuple[float, float]:
    """Needleman-Wunsch global alignment score and its value over the longer length."""
    n, m = len(f), len(g)
    h = np.zeros((n + 1, m + 1))
    h[:, 0] = gap * np.arange(n + 1)
    h[0, :] = gap * np.arange(m + 1)
    for i in range(1, n + 1):
        fi = f[i - 1]
        for j in range(1, m + 1):
            diag = h[i - 1, j - 1] + (match if fi == g[j - 1] else mismatch)
            h[i, j] = max(diag, h[i - 1, j] + gap, h[i, j - 1] + gap)
    score = float(h[n, m])
    longest = max(n, m)
    return score, (score / longest if longest else 0.0)


def alignment_consistency(strings: list[AoiString], **weights) -> float:
    """Mean normalized alignment over all pairs of distinct strings."""
    if len(strings) < 2:
        raise InsufficientStrings("need at least two strings")
    vals = [align_score(a.symbols, b.symbols, **weights)[1] for a, b in itertools.combinations(strings, 2)]
    return float(np.mean(vals))


# ---------------------------------------------------------------- report

@dataclass
class AoiParams:
    """AOI discovery and baseline settings; pixel values default from the video's fovea radius."""

    sse_threshold: float | None = None
    link_radius: float | None = None
    max_gap: int = 5
    patch_radius: int | None = None
    change_threshold: float = 0.7
    laplace_add: float = 1.0
    n_random: int = 10
    restarts: int = 10


@dataclass
class VideoConsistency:
    video_id: str
    label: str | None
    n_aois: int
    alignment: float
    alignment_random: float
    markov: float
    markov_random: float


@dataclass
class SequentialReport:
    videos: list[VideoConsistency] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def aggregate(self) -> dict[str, dict[str, float]]:
        groups: dict[str, list[VideoConsistency]] = {}
        for v in self.videos:
            groups.setdefault(v.label or "unlabelled", []).append(v)
        groups["Any"] = list(self.videos)
        out = {}
        for name, vs in groups.items():
            if not vs:
                continue
            out[name] = {
                "alignment": float(np.mean([v.alignment for v in vs])),
                "alignment_random": float(np.mean([v.alignment_random for v in vs])),
                "markov": float(np.mean([v.markov for v in vs])),
                "markov_random": float(np.mean([v.markov_random for v in vs])),
                "n_videos": len(vs),
            }
        return out

    def to_dict(self) -> dict:
        return {
            "per_video": [v.__dict__ for v in self.videos],
            "per_label": self.aggregate(),
            "skipped": self.skipped,
        }


def sequential_consistency_report(
    fixations: FixationSet,
    params: AoiParams | None = None,
    rng_seed: int = 0,
    volumes: dict[str, np.ndarray] | None = None,
    group: str | None = "active",
) -> SequentialReport:
    """Alignment and Markov consistency per video against random AOI-string baselines.

    AOIs are extended over ``volumes[video]`` before generating baselines
    when the video volume is supplied.
    """
    params = params or AoiParams()
    fx_all = fixations.for_group(group) if group else fixations
    report = SequentialReport()
    for k, vid in enumerate(fx_all.video_ids()):
        meta = fixations.videos[vid]
        fx = fx_all.for_video(vid)
        if len(fx.subjects) < 2:
            report.skipped.append(vid)
            continue
        fovea = meta.fovea_px
        tracks = discover_aois(
            fx,
            sse_threshold=params.sse_threshold if params.sse_threshold is not None else fovea**2,
            link_radius=params.link_radius if params.link_radius is not None else fovea,
            max_gap=params.max_gap,
            rng_seed=rng_seed + k,
            restarts=params.restarts,
        )
        strings = assign_scanpaths(fx, tracks)
        ext = tracks
        if volumes is not None and vid in volumes:
            radius = params.patch_radius if params.patch_radius is not None else max(1, int(round(fovea)))
            ext = extend_aois(tracks, volumes[vid], radius, params.change_threshold)
        randoms = random_aoi_strings(ext, params.n_random, [len(s.symbols) for s in strings], rng_seed + 7919 * (k + 1))
        A = len(tracks)
        report.videos.append(
            VideoConsistency(
                video_id=vid,
                label=meta.label,
                n_aois=A,
                alignment=alignment_consistency(strings),
                alignment_random=alignment_consistency(randoms),
                markov=markov_consistency(strings, A, params.laplace_add),
                markov_random=markov_consistency(randoms, A, params.laplace_add),
            )
        )
    return report
