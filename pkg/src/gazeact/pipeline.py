"""End-to-end action recognition: interest-point sampling, descriptor extraction,
BoW + MKL or second-order pooling + linear SVM, and evaluation."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import FixationSet
from .features import (
    RECOGNITION_GRIDS,
    DescriptorExtractor,
    FlowField,
    GridConfig,
    counts_per_frame,
    harris_interest_points,
    horn_schunck_flow,
)
from .learn import (
    average_precision,
    bow_encode,
    chi2_distance,
    kmeans,
    mkl_train,
    o2p_encode,
    svm_train_linear,
)
from .saliency import (
    InterestPoint,
    SaliencyMap,
    build_gt_saliency,
    center_bias_saliency,
    fixation_interest_points,
    sample_interest_points,
    uniform_map,
)

log = logging.getLogger(__name__)

SAMPLERS = ("harris", "uniform", "center-bias", "saliency", "predicted", "fixations")
ENCODERS = ("bow", "o2p")


@dataclass
class RecognitionConfig:
    encoder: str = "bow"
    sampler: str = "saliency"
    grids: tuple[GridConfig, ...] = RECOGNITION_GRIDS
    channels: tuple[str, ...] = ("hog", "mbh")
    vocab_size: int = 64
    vocab_max_descriptors: int = 4000
    kmeans_iter: int = 30
    alpha: float = 0.0
    sigma: float | None = None
    scale_range: tuple[float, float] = (2.0, 8.0)
    points_per_frame: int | None = None  # None matches the Harris firing rate
    harris_threshold: float = 0.05
    C: float = 10.0
    mkl_sigma: float = 1e-3
    o2p_epsilon: float = 1e-3
    fixation_mode: str = "per_frame_2d"
    fixation_sigma_s: float = 4.0
    flow_lam: float = 0.05
    flow_iterations: int = 100

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder {self.encoder!r}")


@dataclass
class VideoData:
    """Per-video quantities shared by every run on a corpus."""

    volume: np.ndarray
    flow: FlowField
    extractor: DescriptorExtractor
    harris: list[InterestPoint]
    harris_counts: list[int]


def prepare_video(volume: np.ndarray, cfg: RecognitionConfig, flow: FlowField | None = None) -> VideoData:
    flow = flow or horn_schunck_flow(volume, cfg.flow_lam, cfg.flow_iterations)
    harris = harris_interest_points(volume, relative_threshold=cfg.harris_threshold)
    return VideoData(volume, flow, DescriptorExtractor(volume, flow), harris, counts_per_frame(harris, volume.shape[0]))


def prepare_corpus(
    volumes: dict[str, np.ndarray],
    cfg: RecognitionConfig,
    flows: dict[str, FlowField] | None = None,
    jobs: int = 1,
) -> dict[str, VideoData]:
    """``prepare_video`` over a corpus with a bounded worker pool; results do not depend on ``jobs``."""
    flows = flows or {}
    vids = sorted(volumes)

    def work(v):
        return prepare_video(volumes[v], cfg, flows.get(v))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return dict(zip(vids, pool.map(work, vids)))
    return {v: work(v) for v in vids}


@dataclass
class RecognitionResult:
    classes: list[str]
    average_precision: dict[str, float]
    accuracy: float
    predictions: dict[str, str]
    points_per_video: float
    config: dict = field(default_factory=dict)

    @property
    def mean_ap(self) -> float:
        return float(np.mean(list(self.average_precision.values())))

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "average_precision": self.average_precision,
            "mean_ap": self.mean_ap,
            "accuracy": self.accuracy,
            "points_per_video": self.points_per_video,
            "predictions": self.predictions,
            "config": self.config,
        }


def sample_points(
    vid: str,
    data: VideoData,
    cfg: RecognitionConfig,
    fixations: FixationSet | None,
    seed: np.random.SeedSequence,
    maps: dict[str, SaliencyMap] | None = None,
) -> list[InterestPoint]:
    """Interest points of one video under the configured sampler."""
    T = data.volume.shape[0]
    counts = [cfg.points_per_frame] * T if cfg.points_per_frame is not None else data.harris_counts
    if cfg.sampler == "harris":
        return data.harris
    if cfg.sampler == "fixations":
        return fixation_interest_points(fixations.for_video(vid), cfg.fixation_mode, cfg.fixation_sigma_s)
    if cfg.sampler == "uniform":
        smap = uniform_map(vid, data.volume.shape)
    elif cfg.sampler == "center-bias":
        smap = center_bias_saliency(vid, data.volume.shape)
    elif cfg.sampler == "saliency":
        smap = build_gt_saliency(fixations.for_video(vid), fixations.videos[vid], cfg.sigma, cfg.alpha)
    else:
        if maps is None or vid not in maps:
            raise ValueError(f"predicted sampler needs a saliency map for {vid}")
        smap = maps[vid]
    seed_int = int(seed.generate_state(1)[0])
    return sample_interest_points(smap, counts, cfg.scale_range, seed_int)


def extract_channels(data: VideoData, points: list[InterestPoint], cfg: RecognitionConfig) -> dict[str, np.ndarray]:
    """Descriptor matrix per channel name, e.g. ``hog-2x2x1``."""
    rows: dict[str, list[np.ndarray]] = {}
    for p in points:
        if "hog" in cfg.channels:
            for g, d in data.extractor.hog(p, cfg.grids).items():
                rows.setdefault(f"hog-{g.name}", []).append(d)
        if "mbh" in cfg.channels:
            for g, d in data.extractor.mbh(p, cfg.grids).items():
                rows.setdefault(f"mbh-{g.name}", []).append(d)
    out = {}
    for ch in channel_names(cfg):
        g = next(g for g in cfg.grids if ch.endswith(g.name))
        dim = g.length * (2 if ch.startswith("mbh") else 1)
        out[ch] = np.asarray(rows.get(ch, []), dtype=np.float64).reshape(-1, dim)
    return out


def channel_names(cfg: RecognitionConfig) -> list[str]:
    return [f"{c}-{g.name}" for c in cfg.channels for g in cfg.grids]


def _mean_offdiag(D: np.ndarray) -> float:
    n = D.shape[0]
    if n < 2:
        return 1.0
    m = (D.sum() - np.trace(D)) / (n * n - n)
    return m if m > 0 else 1.0


def bow_grams(descs: dict[str, dict[str, np.ndarray]], train: list[str], test: list[str], cfg: RecognitionConfig, seed: int):
    """Per-channel RBF-chi2 Gram matrices (train x train and test x train)."""
    rng = np.random.default_rng(seed)
    g_train, g_test = [], []
    for ci, ch in enumerate(channel_names(cfg)):
        pool = np.vstack([descs[v][ch] for v in train])
        if len(pool) > cfg.vocab_max_descriptors:
            pool = pool[rng.choice(len(pool), cfg.vocab_max_descriptors, replace=False)]
        vocab = kmeans(pool, min(cfg.vocab_size, len(pool)), rng_seed=seed + ci, max_iter=cfg.kmeans_iter)
        h_tr = np.array([bow_encode(descs[v][ch], vocab)[0] for v in train])
        h_te = np.array([bow_encode(descs[v][ch], vocab)[0] for v in test])
        d_tr = chi2_distance(h_tr, h_tr)
        gamma = 1.0 / _mean_offdiag(d_tr)
        K = np.exp(-gamma * d_tr)
        g_train.append(0.5 * (K + K.T))
        g_test.append(np.exp(-gamma * chi2_distance(h_te, h_tr)))
    return np.stack(g_train), np.stack(g_test)


def o2p_features(descs: dict[str, np.ndarray], cfg: RecognitionConfig) -> np.ndarray:
    """Second-order pooling per channel, concatenated."""
    parts = []
    for ch in channel_names(cfg):
        D = descs[ch]
        d = D.shape[1]
        if D.shape[0] >= 2:
            parts.append(o2p_encode(D, cfg.o2p_epsilon))
        else:
            parts.append(np.zeros(d * (d + 1) // 2))
    return np.concatenate(parts)


def run_recognition(
    videos: dict[str, VideoData],
    labels: dict[str, str],
    train: list[str],
    test: list[str],
    cfg: RecognitionConfig,
    rng_seed: int = 0,
    fixations: FixationSet | None = None,
    maps: dict[str, SaliencyMap] | None = None,
    extra_grams: dict[str, np.ndarray] | None = None,
    gram_ids: list[str] | None = None,
) -> RecognitionResult:
    """Train one-vs-all classifiers on ``train`` and report per-class AP and accuracy on ``test``.

    ``extra_grams`` are precomputed square kernels over the videos listed in
    ``gram_ids``; with the bow encoder they join the descriptor kernels in MKL.
    """
    classes = sorted({labels[v] for v in train})
    seeds = np.random.SeedSequence(rng_seed).spawn(len(videos))
    seed_of = dict(zip(sorted(videos), seeds))
    descs, n_points = {}, []
    for vid in train + test:
        pts = sample_points(vid, videos[vid], cfg, fixations, seed_of[vid], maps)
        n_points.append(len(pts))
        descs[vid] = extract_channels(videos[vid], pts, cfg)
    scores = np.zeros((len(test), len(classes)))
    if cfg.encoder == "bow":
        g_tr, g_te = bow_grams(descs, train, test, cfg, rng_seed)
        if extra_grams:
            pos = {v: i for i, v in enumerate(gram_ids or [])}
            missing = [v for v in train + test if v not in pos]
            if missing:
                raise ValueError(f"external Gram matrices lack videos {missing[:3]}")
            itr = [pos[v] for v in train]
            ite = [pos[v] for v in test]
            g_tr = np.concatenate([g_tr, np.stack([G[np.ix_(itr, itr)] for G in extra_grams.values()])])
            g_te = np.concatenate([g_te, np.stack([G[np.ix_(ite, itr)] for G in extra_grams.values()])])
        for k, c in enumerate(classes):
            y = np.array([1.0 if labels[v] == c else -1.0 for v in train])
            model = mkl_train(g_tr, y, C=cfg.C, sigma_reg=cfg.mkl_sigma, rng_seed=rng_seed)
            scores[:, k] = model.decision(g_te)
    else:
        X_tr = np.array([o2p_features(descs[v], cfg) for v in train])
        X_te = np.array([o2p_features(descs[v], cfg) for v in test])
        for k, c in enumerate(classes):
            y = np.array([1.0 if labels[v] == c else -1.0 for v in train])
            model = svm_train_linear(X_tr, y, C=cfg.C, rng_seed=rng_seed)
            scores[:, k] = model.decision(X_te)
    aps = {}
    for k, c in enumerate(classes):
        truth = np.array([labels[v] == c for v in test])
        if truth.any():
            aps[c] = average_precision(scores[:, k], truth)
    pred = {v: classes[int(np.argmax(scores[i]))] for i, v in enumerate(test)}
    acc = float(np.mean([pred[v] == labels[v] for v in test]))
    return RecognitionResult(classes, aps, acc, pred, float(np.mean(n_points)), {"sampler": cfg.sampler, "encoder": cfg.encoder, "seed": rng_seed})


def split_by_label(labels: dict[str, str], test_fraction: float = 0.5) -> tuple[list[str], list[str]]:
    """Deterministic per-class split: every other video (by id) goes to test."""
    train, test = [], []
    by_class: dict[str, list[str]] = {}
    for v in sorted(labels):
        by_class.setdefault(labels[v], []).append(v)
    step = max(2, int(round(1.0 / test_fraction))) if test_fraction > 0 else 0
    for vids in by_class.values():
        for i, v in enumerate(vids):
            (test if step and i % step == 1 else train).append(v)
    return train, test
