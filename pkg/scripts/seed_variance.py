"""Spread of end-to-end accuracy over random seeds with second-order pooling.

Example:
    python3 scripts/seed_variance.py --seeds 10 --samplers saliency,uniform
"""
import argparse

import numpy as np

from gazeact.pipeline import RecognitionConfig, prepare_corpus, run_recognition, split_by_label
from gazeact.synth import SCENARIOS, synth_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--samplers", default="saliency,center-bias,uniform")
    ap.add_argument("--points-per-frame", type=int, default=4)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    corpus = synth_dataset(list(SCENARIOS[:3]), 30, n_subjects=6, rng_seed=0, distractors=5)
    videos = prepare_corpus(corpus.volumes, RecognitionConfig(), jobs=args.jobs)
    train, test = split_by_label(corpus.labels)
    for sampler in args.samplers.split(","):
        cfg = RecognitionConfig(encoder="o2p", sampler=sampler, points_per_frame=args.points_per_frame)
        acc = np.array([run_recognition(videos, corpus.labels, train, test, cfg, s, corpus.fixations).accuracy
                        for s in range(args.seeds)])
        print(f"{sampler:12s} accuracy {acc.mean():.3f} +/- {acc.std(ddof=1):.4f} over {args.seeds} seeds")


if __name__ == "__main__":
    main()
