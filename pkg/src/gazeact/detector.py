"""HoG-MBH fixation detector: training on fixated vs non-fixated windows and
sliding-window application to produce saliency maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import FixationSet, GazeError
from .features import DETECTOR_GRIDS, DescriptorExtractor, FlowField
from .learn import LinearModel, chi2_feature_map, svm_train_linear
from .saliency import InterestPoint, SaliencyMap


class DimensionMismatch(GazeError):
    pass


@dataclass
class DetectorSpec:
    sigma_s: float = 2.0
    sigma_t: float = 2.0
    chi2_order: int = 3
    chi2_period: float = 0.5

    @property
    def raw_dim(self) -> int:
        n = sum(g.length for g in DETECTOR_GRIDS)
        return 3 * n  # HoG plus the two MBH planes

    @property
    def dim(self) -> int:
        return self.raw_dim * (2 * self.chi2_order + 1)


def window_features(extractor: DescriptorExtractor, points, spec: DetectorSpec) -> np.ndarray:
    """Concatenated HoG and MBH of the detector grids, lifted by the chi-squared feature map."""
    rows = []
    for p in points:
        h = extractor.hog(p, DETECTOR_GRIDS)
        m = extractor.mbh(p, DETECTOR_GRIDS)
        rows.append(np.concatenate([h[g] for g in DETECTOR_GRIDS] + [m[g] for g in DETECTOR_GRIDS]))
    raw = np.asarray(rows).reshape(len(rows), spec.raw_dim)
    return chi2_feature_map(raw, spec.chi2_order, spec.chi2_period)


def training_windows(
    fixations: FixationSet,
    video_id: str,
    shape: tuple[int, int, int],
    n_pos: int,
    n_neg: int,
    rng: np.random.Generator,
    spec: DetectorSpec,
    exclusion_px: float,
) -> tuple[list[InterestPoint], list[InterestPoint]]:
    """Fixated windows and random windows farther than ``exclusion_px`` from any active fixation."""
    T, H, W = shape
    index = fixations.frame_index(video_id)
    fixated = [(r.x, r.y, t) for t, recs in sorted(index.items()) for r in recs]
    pos = []
    if fixated:
        for i in rng.integers(len(fixated), size=n_pos):
            x, y, t = fixated[i]
            pos.append(InterestPoint(x, y, t, spec.sigma_s, spec.sigma_t))
    neg = []
    attempts = 0
    while len(neg) < n_neg and attempts < 50 * n_neg:
        attempts += 1
        t = int(rng.integers(T))
        x, y = rng.uniform(0, W - 1), rng.uniform(0, H - 1)
        if all((r.x - x) ** 2 + (r.y - y) ** 2 > exclusion_px**2 for r in index.get(t, [])):
            neg.append(InterestPoint(x, y, t, spec.sigma_s, spec.sigma_t))
    return pos, neg


def build_training_set(
    videos: dict[str, tuple[np.ndarray, FlowField]],
    fixations: FixationSet,
    n_examples: int,
    rng_seed: int = 0,
    spec: DetectorSpec | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced fixated/non-fixated detector examples spread evenly over the videos."""
    spec = spec or DetectorSpec()
    rng = np.random.default_rng(rng_seed)
    # positive/negative pairs spread over the videos, remainder to the first ones
    base, extra = divmod(max(1, n_examples // 2), len(videos))
    X, y = [], []
    for i, vid in enumerate(sorted(videos)):
        volume, flow = videos[vid]
        meta = fixations.videos[vid]
        per_video = base + (i < extra)
        if per_video == 0:
            continue
        pos, neg = training_windows(fixations, vid, volume.shape, per_video, per_video, rng, spec, meta.fovea_px)
        ex = DescriptorExtractor(volume, flow)
        if pos:
            X.append(window_features(ex, pos, spec))
            y.append(np.ones(len(pos)))
        if neg:
            X.append(window_features(ex, neg, spec))
            y.append(-np.ones(len(neg)))
    return np.vstack(X), np.concatenate(y)


def train_detector(X: np.ndarray, y: np.ndarray, C: float = 0.1, rng_seed: int = 0) -> LinearModel:
    return svm_train_linear(X, y, C=C, rng_seed=rng_seed)


def score_windows(model: LinearModel, extractor: DescriptorExtractor, points, spec: DetectorSpec, batch: int = 512) -> np.ndarray:
    if model.w.shape[0] != spec.dim:
        raise DimensionMismatch(f"model has {model.w.shape[0]} weights, features have {spec.dim}")
    out = []
    for s in range(0, len(points), batch):
        out.append(model.decision(window_features(extractor, points[s : s + batch], spec)))
    return np.concatenate(out) if out else np.zeros(0)


def detector_apply(
    model: LinearModel,
    volume: np.ndarray,
    flow: FlowField,
    stride: tuple[int, int, int] = (4, 4, 2),
    scales: list[tuple[float, float]] | None = None,
    spec: DetectorSpec | None = None,
    video_id: str = "",
) -> SaliencyMap:
    """Sliding-window detector scores turned into a per-frame saliency map.

    Scores (max over ``scales``) are computed on a stride lattice,
    trilinearly interpolated to every pixel, shifted by the per-frame
    minimum and normalized per frame.
    """
    spec = spec or DetectorSpec()
    scales = scales or [(spec.sigma_s, spec.sigma_t)]
    T, H, W = volume.shape
    sx, sy, st = stride
    xs = np.arange(0, W, sx)
    ys = np.arange(0, H, sy)
    ts = np.arange(0, T, st)
    ex = DescriptorExtractor(volume, flow)
    raw = np.full((len(ts), len(ys), len(xs)), -np.inf)
    for ss, tt in scales:
        pts = [InterestPoint(float(x), float(y), int(t), ss, tt) for t in ts for y in ys for x in xs]
        raw = np.maximum(raw, score_windows(model, ex, pts, spec).reshape(raw.shape))
    axes = [a.astype(float) if len(a) > 1 else np.array([a[0], a[0] + 1.0]) for a in (ts, ys, xs)]
    vals = raw
    for ax, a in enumerate((ts, ys, xs)):
        if len(a) == 1:
            vals = np.concatenate([vals, vals], axis=ax)
    interp = RegularGridInterpolator(axes, vals, method="linear")
    gt, gy, gx = np.meshgrid(
        np.clip(np.arange(T), axes[0][0], axes[0][-1]),
        np.clip(np.arange(H), axes[1][0], axes[1][-1]),
        np.clip(np.arange(W), axes[2][0], axes[2][-1]),
        indexing="ij",
    )
    dense = interp(np.stack([gt, gy, gx], axis=-1))
    dense = dense - dense.min(axis=(1, 2), keepdims=True)
    # interpolation round-off on a flat score field must not leave a pattern
    dense[dense <= 1e-12 * (1.0 + np.abs(raw).max())] = 0.0
    sums = dense.sum(axis=(1, 2), keepdims=True)
    frames = np.where(sums > 0, dense / np.where(sums > 0, sums, 1.0), 1.0 / (H * W))
    return SaliencyMap(video_id, frames, "per_frame")
