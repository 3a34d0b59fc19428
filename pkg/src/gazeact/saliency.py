"""Ground-truth saliency, saliency evaluation measures, baseline and combined maps,
saliency-driven interest-point sampling and fixation-derived interest points."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .consistency import auc_from_scores
from .core import FixationSet, GazeError, VideoMeta, empirical_frame_map
from .io import decode_salm, encode_salm


class DimensionMismatch(GazeError):
    pass


class NoFixatedFrames(GazeError):
    pass


class DegenerateLabels(GazeError):
    pass


@dataclass
class SaliencyMap:
    video_id: str
    frames: np.ndarray  # (T, H, W)
    normalization: str = "per_volume"
    empty: np.ndarray | None = field(default=None, repr=False)  # per-frame flag

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.frames.shape

    def frame_distribution(self, t: int) -> np.ndarray:
        f = self.frames[t]
        s = f.sum()
        return f / s if s > 0 else np.full(f.shape, 1.0 / f.size)

    def per_frame(self) -> "SaliencyMap":
        s = self.frames.sum(axis=(1, 2), keepdims=True)
        T, H, W = self.frames.shape
        frames = np.where(s > 0, self.frames / np.where(s > 0, s, 1.0), 1.0 / (H * W))
        return SaliencyMap(self.video_id, frames, "per_frame", self.empty)

    def per_volume(self) -> "SaliencyMap":
        return SaliencyMap(self.video_id, self.frames / self.frames.sum(), "per_volume", self.empty)

    def to_bytes(self) -> bytes:
        return encode_salm(self.frames, self.normalization)

    @classmethod
    def from_bytes(cls, video_id: str, data: bytes) -> "SaliencyMap":
        frames, mode = decode_salm(data)
        return cls(video_id, frames, mode)


@dataclass(frozen=True)
class InterestPoint:
    x: float
    y: float
    t: int
    sigma_s: float
    sigma_t: float

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "t": self.t, "sigma_s": self.sigma_s, "sigma_t": self.sigma_t}


def dump_points(points: list[InterestPoint]) -> str:
    return "".join(json.dumps(p.to_dict()) + "\n" for p in points)


def load_points(text: str) -> list[InterestPoint]:
    return [InterestPoint(**json.loads(line)) for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------- ground truth

def fixation_map_frames(fixations: FixationSet, meta: VideoMeta, sigma: float, downsample: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame empirical maps m_f/sum(m_f), (T, H, W), and the empty-frame flags."""
    W, H = meta.grid_shape(downsample)
    index = fixations.frame_index(meta.video_id)
    frames = np.empty((meta.frame_count, H, W))
    empty = np.zeros(meta.frame_count, dtype=bool)
    for t in range(meta.frame_count):
        pts = [(r.x / downsample, r.y / downsample) for r in index.get(t, [])]
        g = empirical_frame_map(pts, (W, H), sigma / downsample)
        frames[t] = g.values
        empty[t] = g.empty
    return frames, empty


def build_gt_saliency(fixations: FixationSet, meta: VideoMeta, sigma: float | None = None, alpha: float = 0.0, downsample: int = 1) -> SaliencyMap:
    """p_sal = (1 - alpha) p_fix + alpha p_unif over the whole video volume.

    Each frame carries mass 1/T in p_fix; frames without fixations spread
    theirs uniformly. ``sigma`` is in video pixels (default: fovea radius).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    sigma = meta.fovea_px if sigma is None else sigma
    frames, empty = fixation_map_frames(fixations, meta, sigma, downsample)
    T = frames.shape[0]
    p_fix = frames / T
    p_unif = 1.0 / frames.size
    return SaliencyMap(meta.video_id, (1.0 - alpha) * p_fix + alpha * p_unif, "per_volume", empty)


def downsample_map(smap: SaliencyMap, factor: int) -> SaliencyMap:
    """Sum ``factor`` x ``factor`` cell blocks (partial blocks at the border included); mass is preserved."""
    if factor == 1:
        return smap
    T, H, W = smap.frames.shape
    h, w = -(-H // factor), -(-W // factor)
    padded = np.zeros((T, h * factor, w * factor))
    padded[:, :H, :W] = smap.frames
    frames = padded.reshape(T, h, factor, w, factor).sum(axis=(2, 4))
    return SaliencyMap(smap.video_id, frames, smap.normalization, smap.empty)


def uniform_map(video_id: str, shape: tuple[int, int, int]) -> SaliencyMap:
    T, H, W = shape
    return SaliencyMap(video_id, np.full(shape, 1.0 / (T * H * W)), "per_volume")


# ---------------------------------------------------------------- evaluation

def _floor_normalize(p: np.ndarray, epsilon: float) -> np.ndarray:
    p = np.maximum(np.asarray(p, dtype=np.float64), epsilon)
    return p / p.sum()


def _kl(p: np.ndarray, s: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / s)))


def kl_divergence(pred, truth, epsilon: float = 1e-8, mode: str = "per_frame") -> float:
    """KL(truth || pred) in nats with both maps floored at ``epsilon`` and renormalized.

    ``mode='per_frame'`` averages the divergence of frame distributions;
    ``per_volume`` compares the volumes as single distributions. Plain arrays
    are treated as one distribution.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    s = pred.frames if isinstance(pred, SaliencyMap) else np.asarray(pred, dtype=np.float64)
    p = truth.frames if isinstance(truth, SaliencyMap) else np.asarray(truth, dtype=np.float64)
    if s.shape != p.shape:
        raise DimensionMismatch(f"prediction {s.shape} vs truth {p.shape}")
    if isinstance(pred, SaliencyMap) and isinstance(truth, SaliencyMap) and mode == "per_frame" and s.ndim == 3:
        return float(np.mean([_kl(_floor_normalize(p[t], epsilon), _floor_normalize(s[t], epsilon)) for t in range(len(p))]))
    return _kl(_floor_normalize(p, epsilon), _floor_normalize(s, epsilon))


def saliency_auc(pred, fixated_points) -> float:
    """Mean over fixated frames of the ROC area separating fixated cells from all others.

    ``fixated_points`` are (x, y, t) in map cells.
    """
    frames = pred.frames if isinstance(pred, SaliencyMap) else np.asarray(pred, dtype=np.float64)
    T, H, W = frames.shape
    by_frame: dict[int, set[tuple[int, int]]] = {}
    for x, y, t in fixated_points:
        t, row, col = int(round(t)), int(round(y)), int(round(x))
        if not (0 <= t < T and 0 <= row < H and 0 <= col < W):
            raise ValueError(f"point ({x}, {y}, {t}) outside the map volume")
        by_frame.setdefault(t, set()).add((row, col))
    if not by_frame:
        raise NoFixatedFrames("no fixated frames to evaluate")
    aucs = []
    for t, cells in sorted(by_frame.items()):
        mask = np.zeros((H, W), dtype=bool)
        rows, cols = zip(*cells)
        mask[list(rows), list(cols)] = True
        if mask.all():
            continue
        aucs.append(auc_from_scores(frames[t][mask], frames[t][~mask]))
    if not aucs:
        raise NoFixatedFrames("every frame is fully fixated")
    return float(np.mean(aucs))


def fixated_cells(fixations: FixationSet, video_id: str, downsample: int = 1) -> list[tuple[float, float, int]]:
    """(x, y, t) map cells for every frame covered by each fixation."""
    out = []
    for r in fixations.records:
        if r.video_id == video_id:
            for t in range(r.start_frame, r.end_frame + 1):
                out.append((r.x / downsample, r.y / downsample, t))
    return out


# ---------------------------------------------------------------- baselines and combination

def center_bias_map(width: int, height: int) -> np.ndarray:
    """Negated distance to the frame center, shifted to be non-negative, summing to 1."""
    ys, xs = np.mgrid[0:height, 0:width]
    d = np.hypot(xs - (width - 1) / 2.0, ys - (height - 1) / 2.0)
    m = d.max() - d
    s = m.sum()
    return m / s if s > 0 else np.full((height, width), 1.0 / (width * height))


def center_bias_saliency(video_id: str, shape: tuple[int, int, int]) -> SaliencyMap:
    T, H, W = shape
    frame = center_bias_map(W, H)
    return SaliencyMap(video_id, np.repeat(frame[None] / T, T, axis=0), "per_volume")


def _standardize(frame: np.ndarray) -> np.ndarray:
    sd = frame.std()
    return (frame - frame.mean()) / sd if sd > 0 else np.zeros_like(frame)


def channel_features(channels: list[SaliencyMap], t: int) -> np.ndarray:
    """(H*W, C) per-pixel channel values for frame t, standardized per frame."""
    return np.stack([_standardize(c.frames[t]).ravel() for c in channels], axis=1)


@dataclass
class MapCombination:
    weights: np.ndarray  # (C,)
    bias: float


def combine_maps(
    channels: list[SaliencyMap],
    fixations: list[tuple[float, float, int]],
    regularization: float = 1.0,
    n_frames: int = 500,
    negatives_per_frame: int = 10,
    rng_seed: int = 0,
) -> MapCombination:
    """Ridge-regularized linear classifier of fixated vs non-fixated pixels from channel values.

    Samples up to ``n_frames`` fixated frames; each contributes its fixated
    cells as positives and random other cells as negatives.
    """
    if not channels:
        raise ValueError("need at least one channel")
    shape = channels[0].frames.shape
    if any(c.frames.shape != shape for c in channels):
        raise DimensionMismatch("channels differ in shape")
    T, H, W = shape
    by_frame: dict[int, set[int]] = {}
    for x, y, t in fixations:
        by_frame.setdefault(int(round(t)), set()).add(int(round(y)) * W + int(round(x)))
    rng = np.random.default_rng(rng_seed)
    frames = sorted(by_frame)
    if len(frames) > n_frames:
        frames = sorted(rng.choice(frames, size=n_frames, replace=False).tolist())
    X, y = [], []
    for t in frames:
        feats = channel_features(channels, t)
        pos = np.fromiter(by_frame[t], dtype=int)
        free = np.setdiff1d(np.arange(H * W), pos)
        if free.size:
            neg = rng.choice(free, size=min(negatives_per_frame, free.size), replace=False)
            X.append(feats[neg])
            y.append(-np.ones(len(neg)))
        X.append(feats[pos])
        y.append(np.ones(len(pos)))
    if not X:
        raise DegenerateLabels("no samples")
    X, y = np.vstack(X), np.concatenate(y)
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("samples contain a single class")
    Xa = np.hstack([X, np.ones((len(X), 1))])
    reg = regularization * np.eye(Xa.shape[1])
    reg[-1, -1] = 0.0
    sol = np.linalg.solve(Xa.T @ Xa + reg, Xa.T @ y)
    return MapCombination(sol[:-1], float(sol[-1]))


def apply_combination(channels: list[SaliencyMap], combo: MapCombination, video_id: str | None = None) -> SaliencyMap:
    """Weighted channel sum per frame, shifted to be non-negative and normalized per frame."""
    T, H, W = channels[0].frames.shape
    out = np.empty((T, H, W))
    for t in range(T):
        score = (channel_features(channels, t) @ combo.weights).reshape(H, W)
        score = score - score.min()
        s = score.sum()
        out[t] = score / s if s > 0 else 1.0 / (H * W)
    return SaliencyMap(video_id or channels[0].video_id, out, "per_frame")


# ---------------------------------------------------------------- sampling

def _sample_frame(dist: np.ndarray, n: int, seed: np.random.SeedSequence, lo: float, hi: float):
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(dist.ravel())
    cdf /= cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), cdf.size - 1)
    scales = rng.uniform(lo, hi, size=(n, 2))
    return idx, scales


def sample_interest_points(
    smap: SaliencyMap,
    counts,
    scale_range: tuple[float, float] = (2.0, 8.0),
    rng_seed: int = 0,
    downsample: int = 1,
    jobs: int = 1,
) -> list[InterestPoint]:
    """Draw interest points from the frame-conditional distributions of a saliency map.

    ``counts`` is either an int (fixed number per frame) or a per-frame
    sequence, e.g. the firing counts of a Harris detector. Each frame uses
    its own child seed, so results do not depend on ``jobs``. Locations are
    returned in video pixels (cell centers when ``downsample`` > 1).
    """
    lo, hi = scale_range
    if lo > hi:
        raise ValueError("scale_range must satisfy lo <= hi")
    T, H, W = smap.frames.shape
    per_frame = [int(counts)] * T if np.isscalar(counts) else [int(c) for c in counts]
    if len(per_frame) != T:
        raise DimensionMismatch(f"{len(per_frame)} counts for {T} frames")
    seeds = np.random.SeedSequence(rng_seed).spawn(T)

    def work(t):
        return _sample_frame(smap.frame_distribution(t), per_frame[t], seeds[t], lo, hi)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, range(T)))
    else:
        results = [work(t) for t in range(T)]
    out = []
    for t, (idx, scales) in enumerate(results):
        rows, cols = np.divmod(idx, W)
        xs = (cols + 0.5) * downsample - 0.5
        ys = (rows + 0.5) * downsample - 0.5
        for x, y, (ss, st) in zip(xs, ys, scales):
            out.append(InterestPoint(float(x), float(y), t, float(ss), float(st)))
    return out


# ---------------------------------------------------------------- fixation operators

def fixation_interest_points(
    fixations: FixationSet,
    mode: str = "per_frame_2d",
    sigma_s: float = 4.0,
    temporal_factor: float = 0.5,
    sigma_t_2d: float = 2.0,
) -> list[InterestPoint]:
    """Interest points placed at fixations.

    ``per_frame_2d`` emits one point per fixated frame; ``per_fixation_3d``
    one point per fixation at its temporal midpoint with a temporal scale
    proportional to its length.
    """
    out = []
    for r in fixations.records:
        if mode == "per_frame_2d":
            out.extend(InterestPoint(r.x, r.y, f, sigma_s, sigma_t_2d) for f in range(r.start_frame, r.end_frame + 1))
        elif mode == "per_fixation_3d":
            out.append(InterestPoint(r.x, r.y, (r.start_frame + r.end_frame) // 2, sigma_s, temporal_factor * r.duration))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return out


def foveation_rate(points: list[InterestPoint], fixations: FixationSet, fovea_px: float, video_id: str | None = None) -> float:
    """Fraction of points within ``fovea_px`` of a fixation active on the point's frame."""
    if not points:
        return 0.0
    vid = video_id or (fixations.video_ids()[0] if len(fixations) else None)
    index = fixations.frame_index(vid) if vid is not None else {}
    hit = 0
    for p in points:
        recs = index.get(int(round(p.t)), [])
        if any((r.x - p.x) ** 2 + (r.y - p.y) ** 2 <= fovea_px**2 for r in recs):
            hit += 1
    return hit / len(points)
