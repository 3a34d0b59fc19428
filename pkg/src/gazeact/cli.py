"""Command-line entry point: ``gazeact <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .aoi import NoFixations
from .config import ConfigError, RunConfig, apply_overrides, parse_config
from .consistency import (
    AoiParams,
    sequential_consistency_report,
    spatial_agreement,
    task_influence_pvalues,
)
from .core import FixationSet, GazeError, VideoMeta, dump_fixations_jsonl, dump_manifest, load_manifest, parse_fixation_log
from .detector import DetectorSpec, build_training_set, detector_apply, train_detector
from .features import FlowField, horn_schunck_flow
from .io import FormatError, atomic_write, encode_pgm, encode_volume, load_container, read_video, save_container
from .learn import LinearModel
from .pipeline import ENCODERS, SAMPLERS, RecognitionConfig, prepare_corpus, run_recognition, split_by_label
from .saliency import (
    SaliencyMap,
    apply_combination,
    build_gt_saliency,
    center_bias_saliency,
    combine_maps,
    downsample_map,
    dump_points,
    fixated_cells,
    kl_divergence,
    sample_interest_points,
    saliency_auc,
    uniform_map,
)
from .synth import SCENARIOS, synth_dataset

log = logging.getLogger("gazeact")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


# ---------------------------------------------------------------- shared helpers

def _pmap(fn, items, jobs: int):
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _manifest(cfg: RunConfig) -> list[VideoMeta]:
    if not cfg.videos:
        raise ConfigError("a video manifest is required (--videos)")
    return load_manifest(Path(cfg.videos).read_text())


def _fixations(cfg: RunConfig, manifest: list[VideoMeta]) -> FixationSet:
    if not cfg.fixations:
        raise ConfigError("a fixation log is required (--fixations)")
    path = Path(cfg.fixations)
    fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    return parse_fixation_log(path.read_bytes(), fmt, manifest)


def _volumes(cfg: RunConfig, manifest: list[VideoMeta], required: bool = True) -> dict[str, np.ndarray]:
    root = Path(cfg.videos).parent
    out = {}
    for meta in manifest:
        if meta.path is None:
            if required:
                raise GazeError(f"video {meta.video_id} has no path in the manifest")
            continue
        vol = read_video(root / meta.path)
        if vol.shape != (meta.frame_count, meta.height, meta.width):
            raise GazeError(f"video {meta.video_id}: volume {vol.shape} does not match the manifest")
        out[meta.video_id] = vol
    return out


def _flows(cfg: RunConfig, volumes: dict[str, np.ndarray]) -> dict[str, FlowField]:
    """External flow files (``<flow_dir>/<video>.flow``) where present, Horn-Schunck otherwise."""
    out = {}
    for vid in sorted(volumes):
        path = Path(cfg.flow_dir) / f"{vid}.flow" if cfg.flow_dir else None
        if path is not None and path.exists():
            flow = FlowField.from_bytes(path.read_bytes())
            if flow.u.shape != volumes[vid].shape:
                raise GazeError(f"flow of {vid} has shape {flow.u.shape}, video {volumes[vid].shape}")
            out[vid] = flow
    missing = [v for v in sorted(volumes) if v not in out]
    computed = _pmap(lambda v: horn_schunck_flow(volumes[v], cfg.flow_lambda, cfg.flow_iterations), missing, cfg.jobs)
    out.update(zip(missing, computed))
    return out


def _on_grid(smap: SaliencyMap, meta: VideoMeta, downsample: int) -> SaliencyMap:
    """A map at the analysis grid; full-resolution maps are block-summed down to it."""
    W, H = meta.grid_shape(downsample)
    if smap.frames.shape == (meta.frame_count, H, W):
        return smap
    if smap.frames.shape == (meta.frame_count, meta.height, meta.width):
        return downsample_map(smap, downsample)
    raise GazeError(f"map of {meta.video_id} has shape {smap.frames.shape}, expected {(meta.frame_count, H, W)}")


def _load_maps(directory: str, video_ids) -> dict[str, SaliencyMap]:
    root = Path(directory)
    out = {}
    for vid in video_ids:
        path = root / f"{vid}.salm"
        if not path.exists():
            raise GazeError(f"missing saliency map {path}")
        out[vid] = SaliencyMap.from_bytes(vid, path.read_bytes())
    return out


def _write_maps(out_dir: Path, maps: dict[str, SaliencyMap], pgm: bool = False) -> dict[str, str]:
    (out_dir / "maps").mkdir(parents=True, exist_ok=True)
    paths = {}
    for vid, smap in sorted(maps.items()):
        path = out_dir / "maps" / f"{vid}.salm"
        atomic_write(path, smap.to_bytes())
        paths[vid] = str(path)
        if pgm:
            _write_pgm_frames(out_dir / "pgm" / vid, smap)
    return paths


def _write_pgm_frames(directory: Path, smap: SaliencyMap) -> int:
    directory.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(smap.frames):
        atomic_write(directory / f"frame_{t:05d}.pgm", encode_pgm(frame))
    return len(smap.frames)


def _labels(manifest: list[VideoMeta]) -> dict[str, str]:
    return {m.video_id: m.label for m in manifest if m.label is not None}


def _by_label(manifest: list[VideoMeta]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for m in manifest:
        if m.label is not None:
            groups.setdefault(m.label, []).append(m.video_id)
    groups["Any"] = [m.video_id for m in manifest]
    return groups


def _subset(fixations: FixationSet, video_ids) -> FixationSet:
    keep = set(video_ids)
    return FixationSet(tuple(r for r in fixations.records if r.video_id in keep), fixations.videos)


def _summary(per_seed: list[dict]) -> dict:
    """Mean and standard deviation of every numeric leaf across seeds."""

    def walk(items):
        first = items[0]
        if isinstance(first, dict):
            out = {k: walk([i[k] for i in items]) for k in first if all(k in i for i in items)}
            return {k: v for k, v in out.items() if v not in (None, {})} or None
        if isinstance(first, (int, float)) and not isinstance(first, bool):
            vals = np.asarray(items, dtype=np.float64)
            return {"mean": float(vals.mean()), "stdev": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
        return None

    return walk(per_seed) or {}


def _with_seeds(cfg: RunConfig, fn) -> dict:
    seeds = cfg.seed_list()
    per_seed = [dict(fn(s), seed=s) for s in seeds]
    if len(per_seed) == 1:
        return per_seed[0]
    return {"per_seed": per_seed, "summary": _summary([{k: v for k, v in r.items() if k != "seed"} for r in per_seed])}


def _report(cfg: RunConfig, command: str, name: str, payload: dict) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    doc = {"command": command, "config": cfg.resolved(), **payload}
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default))
    print(f"wrote {path}")
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _aoi_params(cfg: RunConfig) -> AoiParams:
    return AoiParams(
        sse_threshold=cfg.sse_threshold,
        link_radius=cfg.link_radius,
        max_gap=cfg.max_gap,
        patch_radius=cfg.patch_radius,
        change_threshold=cfg.change_threshold,
        laplace_add=cfg.laplace_add,
        n_random=cfg.n_random,
        restarts=cfg.kmeans_restarts,
    )


def _recognition_config(cfg: RunConfig) -> RecognitionConfig:
    return RecognitionConfig(
        encoder=cfg.encoder,
        sampler=cfg.sampler,
        vocab_size=cfg.vocab_size,
        vocab_max_descriptors=cfg.vocab_max_descriptors,
        alpha=cfg.alpha,
        sigma=cfg.sigma,
        scale_range=(cfg.scale_lo, cfg.scale_hi),
        points_per_frame=cfg.points_per_frame,
        harris_threshold=cfg.harris_threshold,
        C=cfg.svm_c,
        mkl_sigma=cfg.mkl_sigma,
        o2p_epsilon=cfg.o2p_epsilon,
        fixation_mode=cfg.fixation_mode,
        fixation_sigma_s=cfg.fixation_sigma_s,
        flow_lam=cfg.flow_lambda,
        flow_iterations=cfg.flow_iterations,
    )


# ---------------------------------------------------------------- commands

def cmd_synth(cfg: RunConfig, args) -> None:
    seed = cfg.require_seed()
    kinds = [k.strip() for k in args.scenarios.split(",") if k.strip()]
    bad = [k for k in kinds if k not in SCENARIOS]
    if bad:
        raise ConfigError(f"unknown scenario(s) {bad}; choose from {', '.join(SCENARIOS)}")
    corpus = synth_dataset(
        kinds,
        args.n_videos,
        n_subjects=args.n_subjects,
        noise=args.noise,
        rng_seed=seed,
        n_free=args.n_free,
        size=args.size,
        frames=args.frames,
        distractors=args.distractors,
    )
    out = Path(cfg.out)
    (out / "videos").mkdir(parents=True, exist_ok=True)
    metas = []
    for meta in corpus.manifest:
        rel = f"videos/{meta.video_id}.vol"
        atomic_write(out / rel, encode_volume(corpus.volumes[meta.video_id]))
        metas.append(VideoMeta.from_dict({**meta.to_dict(), "path": rel}))
    atomic_write(out / "manifest.json", dump_manifest(metas))
    atomic_write(out / "fixations.jsonl", dump_fixations_jsonl(corpus.fixations.records))
    _report(
        cfg,
        "synth",
        "synth_report.json",
        {
            "scenarios": kinds,
            "n_videos": len(metas),
            "n_fixations": len(corpus.fixations.records),
            "manifest": str(out / "manifest.json"),
            "fixations": str(out / "fixations.jsonl"),
            "parameters": {k: getattr(args, k) for k in ("n_videos", "n_subjects", "n_free", "noise", "size", "frames", "distractors")},
        },
    )


def cmd_consistency(cfg: RunConfig, args) -> None:
    manifest = _manifest(cfg)
    fx = _fixations(cfg, manifest)
    groups = _by_label(manifest)
    if args.kind == "spatial":
        pairings = ["same_stimulus", "cross_stimulus"] if args.pairing == "both" else [args.pairing]
        active = fx.for_group("active")

        def run(seed):
            out = {}
            for label, vids in groups.items():
                sub = _subset(active, vids)
                row = {}
                for p in pairings:
                    try:
                        res = spatial_agreement(sub, p, cfg.n_samples, cfg.sigma, cfg.skip_ms, seed, cfg.downsample, cfg.pooling)
                        row[p] = res.auc
                    except GazeError as exc:
                        if label == "Any":
                            raise
                        row[p] = None
                        log.warning("%s %s: %s", label, p, exc)
                out[label] = row
            return {"auc": out}

        _report(cfg, "consistency spatial", "consistency_spatial.json", _with_seeds(cfg, run))
    elif args.kind == "task":
        active, free = fx.for_group("active"), fx.for_group("free")

        def run(seed):
            out = {}
            for label, vids in groups.items():
                try:
                    pv = task_influence_pvalues(_subset(active, vids), _subset(free, vids), cfg.n_samples, cfg.sigma, seed, cfg.downsample)
                except GazeError as exc:
                    if label == "Any":
                        raise
                    log.warning("%s: %s", label, exc)
                    continue
                out[label] = {"per_subject": pv, "mean": float(np.mean(list(pv.values())))}
            return {"pvalues": out}

        _report(cfg, "consistency task", "consistency_task.json", _with_seeds(cfg, run))
    else:
        volumes = _volumes(cfg, manifest, required=False)
        params = _aoi_params(cfg)

        def run(seed):
            rep = sequential_consistency_report(fx, params, seed, volumes or None)
            return rep.to_dict()

        result = _with_seeds(cfg, run)
        _report(cfg, "consistency sequential", "consistency_sequential.json", result)
        if args.csv:
            rows = result.get("per_label") or result["per_seed"][0]["per_label"]
            lines = ["label,alignment,alignment_random,markov,markov_random,n_videos"]
            for label, r in rows.items():
                lines.append(f"{label},{r['alignment']:.6f},{r['alignment_random']:.6f},{r['markov']:.6f},{r['markov_random']:.6f},{r['n_videos']}")
            atomic_write(Path(cfg.out) / "consistency_sequential.csv", "\n".join(lines) + "\n")


def cmd_saliency(cfg: RunConfig, args) -> None:
    manifest = _manifest(cfg)
    metas = {m.video_id: m for m in manifest}
    vids = sorted(metas)
    if args.action == "build":
        fx = _fixations(cfg, manifest).for_group("active")
        maps = dict(zip(vids, _pmap(lambda v: build_gt_saliency(fx.for_video(v), metas[v], cfg.sigma, cfg.alpha, cfg.downsample), vids, cfg.jobs)))
        paths = _write_maps(Path(cfg.out), maps, args.pgm)
        _report(cfg, "saliency build", "saliency_build.json", {"maps": paths, "empty_frames": {v: int(m.empty.sum()) for v, m in maps.items()}})
    elif args.action == "eval":
        fx = _fixations(cfg, manifest).for_group("active")
        sources = {}
        if args.maps:
            sources["predicted"] = _load_maps(args.maps, vids)
        if args.baselines:
            sources["uniform"] = {v: uniform_map(v, (metas[v].frame_count, *metas[v].grid_shape(cfg.downsample)[::-1])) for v in vids}
            sources["center-bias"] = {v: center_bias_saliency(v, (metas[v].frame_count, *metas[v].grid_shape(cfg.downsample)[::-1])) for v in vids}
        if not sources:
            raise ConfigError("nothing to evaluate: give --maps and/or --baselines")
        results = {}
        for name, maps in sources.items():
            per_video = {}
            for v in vids:
                if not fx.for_video(v).records:
                    continue
                truth = build_gt_saliency(fx.for_video(v), metas[v], cfg.sigma, cfg.alpha, cfg.downsample)
                pred = _on_grid(maps[v], metas[v], cfg.downsample)
                per_video[v] = {
                    "kl": kl_divergence(pred, truth, cfg.kl_epsilon, cfg.kl_mode),
                    "auc": saliency_auc(pred, fixated_cells(fx, v, cfg.downsample)),
                }
            by_label = {}
            for label, members in _by_label(manifest).items():
                rows = [per_video[v] for v in members if v in per_video]
                if rows:
                    by_label[label] = {k: float(np.mean([r[k] for r in rows])) for k in ("kl", "auc")}
            results[name] = {"per_video": per_video, "per_label": by_label}
        _report(cfg, "saliency eval", "saliency_eval.json", {"results": results})
    elif args.action == "combine":
        seed = cfg.require_seed()
        if not args.channels:
            raise ConfigError("saliency combine needs --channels DIR[,DIR...]")
        fx = _fixations(cfg, manifest).for_group("active")
        dirs = [d for d in args.channels.split(",") if d]
        channel_maps = [{v: _on_grid(m, metas[v], cfg.downsample) for v, m in _load_maps(d, vids).items()} for d in dirs]
        train, test = split_by_label(_labels(manifest)) if _labels(manifest) else (vids[::2], vids[1::2])
        combos = []
        for i, v in enumerate(train):
            pts = fixated_cells(fx, v, cfg.downsample)
            if pts:
                combos.append((v, [cm[v] for cm in channel_maps], pts))
        if not combos:
            raise GazeError("no fixated training videos")
        # stack training videos along time so one classifier sees every frame
        stacked = [
            SaliencyMap("train", np.concatenate([c[1][k].frames for c in combos]), "per_frame") for k in range(len(dirs))
        ]
        offset, pts = 0, []
        for _, chans, p in combos:
            pts += [(x, y, t + offset) for x, y, t in p]
            offset += chans[0].frames.shape[0]
        combo = combine_maps(stacked, pts, cfg.combine_regularization, cfg.combine_frames, rng_seed=seed)
        maps = {v: apply_combination([cm[v] for cm in channel_maps], combo, v) for v in vids}
        paths = _write_maps(Path(cfg.out), maps, args.pgm)
        auc = {v: saliency_auc(maps[v], fixated_cells(fx, v, cfg.downsample)) for v in test if fx.for_video(v).records}
        _report(
            cfg,
            "saliency combine",
            "saliency_combine.json",
            {
                "channels": dirs,
                "weights": combo.weights.tolist(),
                "bias": combo.bias,
                "train": train,
                "test_auc": auc,
                "mean_test_auc": float(np.mean(list(auc.values()))) if auc else None,
                "maps": paths,
            },
        )
    else:  # sample
        seed = cfg.require_seed()
        if args.maps:
            maps = {v: _on_grid(m, metas[v], cfg.downsample) for v, m in _load_maps(args.maps, vids).items()}
        else:
            fx = _fixations(cfg, manifest).for_group("active")
            maps = {v: build_gt_saliency(fx.for_video(v), metas[v], cfg.sigma, cfg.alpha, cfg.downsample) for v in vids}
        counts = args.per_frame if args.per_frame is not None else cfg.points_per_frame
        if counts is None:
            raise ConfigError("saliency sample needs --per-frame N (or points_per_frame in the config)")
        out = Path(cfg.out) / "points"
        out.mkdir(parents=True, exist_ok=True)
        seeds = np.random.SeedSequence(seed).spawn(len(vids))
        written = {}
        for v, ss in zip(vids, seeds):
            pts = sample_interest_points(maps[v], counts, (cfg.scale_lo, cfg.scale_hi), int(ss.generate_state(1)[0]), cfg.downsample, cfg.jobs)
            atomic_write(out / f"{v}.jsonl", dump_points(pts))
            written[v] = len(pts)
        _report(cfg, "saliency sample", "saliency_sample.json", {"points": written})


def cmd_detector(cfg: RunConfig, args) -> None:
    manifest = _manifest(cfg)
    spec = DetectorSpec(cfg.detector_sigma_s, cfg.detector_sigma_t)
    volumes = _volumes(cfg, manifest)
    if args.video_ids:
        keep = set(args.video_ids.split(","))
        volumes = {v: vol for v, vol in volumes.items() if v in keep}
        if not volumes:
            raise GazeError("no listed video is in the manifest")
    flows = _flows(cfg, volumes)
    if args.action == "train":
        seed = cfg.require_seed()
        fx = _fixations(cfg, manifest).for_group("active")
        X, y = build_training_set({v: (volumes[v], flows[v]) for v in volumes}, fx, cfg.detector_examples, seed, spec)
        model = train_detector(X, y, cfg.detector_c, seed)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "detector.gzb"
        params = {"kind": "linear-svm-detector", "C": cfg.detector_c, "sigma_s": spec.sigma_s, "sigma_t": spec.sigma_t,
                  "chi2_order": spec.chi2_order, "chi2_period": spec.chi2_period}
        save_container(path, {"w": model.w, "b": np.array([model.b])}, params)
        acc = float(np.mean(np.sign(model.decision(X)) == y))
        _report(cfg, "detector train", "detector_train.json",
                {"model": str(path), "n_examples": int(len(y)), "n_positive": int((y > 0).sum()), "train_accuracy": acc,
                 "epochs": len(model.history)})
    else:
        if not args.model:
            raise ConfigError("detector apply needs --model PATH")
        arrays, params = load_container(args.model)
        if "w" not in arrays or "b" not in arrays:
            raise FormatError("model container lacks w or b")
        spec = DetectorSpec(params.get("sigma_s", spec.sigma_s), params.get("sigma_t", spec.sigma_t),
                            int(params.get("chi2_order", spec.chi2_order)), params.get("chi2_period", spec.chi2_period))
        model = LinearModel(arrays["w"], float(arrays["b"][0]), float(params.get("C", cfg.detector_c)), [])
        stride = (cfg.stride_x, cfg.stride_y, cfg.stride_t)
        vids = sorted(volumes)
        maps = dict(zip(vids, _pmap(lambda v: detector_apply(model, volumes[v], flows[v], stride, None, spec, v), vids, cfg.jobs)))
        paths = _write_maps(Path(cfg.out), maps, args.pgm)
        _report(cfg, "detector apply", "detector_apply.json", {"maps": paths})


def cmd_recognize(cfg: RunConfig, args) -> None:
    manifest = _manifest(cfg)
    labels = _labels(manifest)
    if len(set(labels.values())) < 2:
        raise GazeError("recognition needs at least two labelled classes in the manifest")
    rcfg = _recognition_config(cfg)
    fx = _fixations(cfg, manifest) if rcfg.sampler in ("saliency", "fixations") else None
    if fx is not None:
        fx = fx.for_group("active")
    volumes = _volumes(cfg, manifest)
    volumes = {v: vol for v, vol in volumes.items() if v in labels}
    flows = _flows(cfg, volumes)
    maps = _load_maps(args.maps, sorted(volumes)) if rcfg.sampler == "predicted" else None
    if rcfg.sampler == "predicted" and not args.maps:
        raise ConfigError("the predicted sampler needs --maps DIR")
    extra, gram_ids = None, None
    if args.extra_grams:
        arrays, params = load_container(args.extra_grams)
        gram_ids = params.get("video_ids")
        if not gram_ids:
            raise FormatError("Gram container sidecar must list video_ids")
        extra = {k: v for k, v in arrays.items() if v.ndim == 2 and v.shape == (len(gram_ids), len(gram_ids))}
        if not extra:
            raise FormatError("Gram container has no square matrices matching video_ids")
    data = prepare_corpus(volumes, rcfg, flows, cfg.jobs)
    train, test = split_by_label(labels)

    def run(seed):
        res = run_recognition(data, labels, train, test, rcfg, seed, fx, maps, extra, gram_ids)
        d = res.to_dict()
        d.pop("config", None)
        return d

    _report(cfg, "recognize", f"recognize_{rcfg.encoder}_{rcfg.sampler}.json", {"train": train, "test": test, **_with_seeds(cfg, run)})


def cmd_report(cfg: RunConfig, args) -> None:
    src = Path(args.input)
    out = Path(cfg.out) / "pgm"
    written = {}
    if src.suffix == ".salm":
        smap = SaliencyMap.from_bytes(src.stem, src.read_bytes())
        written[src.stem] = _write_pgm_frames(out / src.stem, smap)
    else:
        doc = json.loads(src.read_text())
        maps = doc.get("maps")
        if not isinstance(maps, dict):
            raise GazeError(f"{src} lists no maps")
        for vid, path in sorted(maps.items()):
            smap = SaliencyMap.from_bytes(vid, Path(path).read_bytes())
            written[vid] = _write_pgm_frames(out / vid, smap)
    _report(cfg, "report", "report_pgm.json", {"frames": written, "directory": str(out)})


# ---------------------------------------------------------------- parser

_GLOBALS = ("config", "fixations", "videos", "out", "seed", "seeds", "jobs", "downsample")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value configuration file")
    common.add_argument("--fixations", default=argparse.SUPPRESS, help="fixation log (.jsonl or .csv)")
    common.add_argument("--videos", default=argparse.SUPPRESS, help="video manifest (JSON array)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--seeds", default=argparse.SUPPRESS, help="comma-separated seeds; reports mean and stdev")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
    common.add_argument("--downsample", type=int, default=argparse.SUPPRESS)
    common.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE", help="override one config key")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="gazeact", description="Gaze consistency, saliency and saliency-driven action recognition.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    s.add_argument("--scenarios", default=",".join(SCENARIOS[:3]))
    s.add_argument("--n-videos", type=int, default=10, help="videos per scenario")
    s.add_argument("--n-subjects", type=int, default=8)
    s.add_argument("--n-free", type=int, default=0, help="free-viewing subjects")
    s.add_argument("--noise", type=float, default=1.0)
    s.add_argument("--size", type=int, default=48)
    s.add_argument("--frames", type=int, default=24)
    s.add_argument("--distractors", type=int, default=5)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("consistency", parents=[common], help="inter-subject consistency reports")
    c.add_argument("kind", choices=("spatial", "sequential", "task"))
    c.add_argument("--pairing", choices=("same_stimulus", "cross_stimulus", "both"), default="both")
    c.add_argument("--csv", action="store_true", help="also write a CSV summary (sequential)")
    c.set_defaults(func=cmd_consistency)

    sa = sub.add_parser("saliency", parents=[common], help="saliency maps")
    sa.add_argument("action", choices=("build", "eval", "combine", "sample"))
    sa.add_argument("--maps", help="directory of <video>.salm maps")
    sa.add_argument("--channels", help="comma-separated map directories to combine")
    sa.add_argument("--baselines", action="store_true", help="also evaluate uniform and center-bias maps")
    sa.add_argument("--per-frame", type=int, help="interest points per frame")
    sa.add_argument("--pgm", action="store_true", help="also export PGM frames")
    sa.set_defaults(func=cmd_saliency)

    d = sub.add_parser("detector", parents=[common], help="HoG-MBH fixation detector")
    d.add_argument("action", choices=("train", "apply"))
    d.add_argument("--model", help="trained detector container")
    d.add_argument("--video-ids", help="comma-separated subset of manifest videos")
    d.add_argument("--pgm", action="store_true")
    d.set_defaults(func=cmd_detector)

    r = sub.add_parser("recognize", parents=[common], help="end-to-end action recognition")
    r.add_argument("--encoder", choices=ENCODERS, default=argparse.SUPPRESS)
    r.add_argument("--sampler", choices=SAMPLERS, default=argparse.SUPPRESS)
    r.add_argument("--maps", help="saliency maps for the predicted sampler")
    r.add_argument("--extra-grams", help="container of external Gram matrices to fuse")
    r.set_defaults(func=cmd_recognize)

    rp = sub.add_parser("report", parents=[common], help="render maps of a JSON report (or one SALM file) as PGM frames")
    rp.add_argument("input")
    rp.set_defaults(func=cmd_report)
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    ns = vars(args)
    if "config" in ns:
        cfg = parse_config(Path(ns["config"]).read_text(), cfg)
    overrides = {k: ns[k] for k in _GLOBALS if k != "config" and k in ns}
    for k in ("encoder", "sampler"):
        if k in ns:
            overrides[k] = ns[k]
    for item in ns.get("set", []):
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip().replace("-", "_")] = value
    return apply_overrides(cfg, overrides)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        if cfg.jobs < 1 or cfg.downsample < 1:
            raise ConfigError("jobs and downsample must be >= 1")
        args.func(cfg, args)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GazeError, NoFixations, FormatError, OSError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
