"""Recognition accuracy of saliency, center-bias and uniform sampling on a synthetic corpus.

Example:
    python3 scripts/recognition_ordering.py --seeds 0,1,2,3,4 --out out/ordering.json
"""
import argparse
import json
import time

import numpy as np

from gazeact.pipeline import RecognitionConfig, prepare_corpus, run_recognition, split_by_label
from gazeact.synth import SCENARIOS, synth_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--videos-per-class", type=int, default=30)
    ap.add_argument("--subjects", type=int, default=6)
    ap.add_argument("--distractors", type=int, default=5)
    ap.add_argument("--points-per-frame", type=int, default=4, help="0 matches the Harris firing rate")
    ap.add_argument("--samplers", default="saliency,center-bias,uniform,harris")
    ap.add_argument("--encoder", default="bow", choices=("bow", "o2p"))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()

    t0 = time.perf_counter()
    corpus = synth_dataset(list(SCENARIOS[:3]), args.videos_per_class, n_subjects=args.subjects, rng_seed=0,
                           distractors=args.distractors)
    videos = prepare_corpus(corpus.volumes, RecognitionConfig(), jobs=args.jobs)
    train, test = split_by_label(corpus.labels)
    print(f"prepared {len(videos)} videos in {time.perf_counter() - t0:.0f}s")

    ppf = args.points_per_frame or None
    results = {}
    for sampler in args.samplers.split(","):
        rows = []
        for seed in (int(s) for s in args.seeds.split(",")):
            cfg = RecognitionConfig(encoder=args.encoder, sampler=sampler, points_per_frame=ppf)
            r = run_recognition(videos, corpus.labels, train, test, cfg, seed, corpus.fixations)
            rows.append({"seed": seed, "mean_ap": r.mean_ap, "accuracy": r.accuracy, "points_per_video": r.points_per_video})
        maps = np.array([r["mean_ap"] for r in rows])
        results[sampler] = {"runs": rows, "mean_ap": float(maps.mean()), "stdev": float(maps.std(ddof=1)) if len(maps) > 1 else 0.0}
        print(f"{sampler:12s} mean AP {maps.mean():.3f} +/- {results[sampler]['stdev']:.3f}  "
              f"({rows[0]['points_per_video']:.0f} points/video)")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"args": vars(args), "results": results}, fh, indent=2)


if __name__ == "__main__":
    main()
