"""Train the HoG-MBH fixation detector on synthetic videos and score its maps.

Reports held-out window AP, and KL and AUC of detector, center-bias and
uniform maps against the ground-truth saliency of the held-out videos.
"""
import argparse
import time

import numpy as np

from gazeact.detector import build_training_set, detector_apply, train_detector
from gazeact.features import horn_schunck_flow
from gazeact.learn import average_precision
from gazeact.saliency import build_gt_saliency, center_bias_saliency, fixated_cells, kl_divergence, saliency_auc, uniform_map
from gazeact.synth import SCENARIOS, synth_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--videos-per-class", type=int, default=8)
    ap.add_argument("--examples", type=int, default=10_000)
    ap.add_argument("--C", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    t0 = time.perf_counter()
    c = synth_dataset(list(SCENARIOS[:3]), args.videos_per_class, n_subjects=6, rng_seed=args.seed)
    vids = sorted(c.volumes)
    train, test = vids[::2], vids[1::2]
    data = {v: (c.volumes[v], horn_schunck_flow(c.volumes[v])) for v in vids}
    X, y = build_training_set({v: data[v] for v in train}, c.fixations, args.examples, args.seed)
    model = train_detector(X, y, args.C, args.seed)
    Xt, yt = build_training_set({v: data[v] for v in test}, c.fixations, 2000, args.seed + 1)
    print(f"held-out window AP {average_precision(model.decision(Xt), yt > 0):.3f} ({len(y)} training windows)")

    scores = {"detector": [], "center-bias": [], "uniform": []}
    for v in test:
        truth = build_gt_saliency(c.fixations.for_video(v), c.fixations.videos[v]).per_frame()
        cells = fixated_cells(c.fixations, v)
        maps = {
            "detector": detector_apply(model, *data[v], video_id=v),
            "center-bias": center_bias_saliency(v, truth.shape).per_frame(),
            "uniform": uniform_map(v, truth.shape).per_frame(),
        }
        for name, m in maps.items():
            scores[name].append((kl_divergence(m, truth), saliency_auc(m, cells)))
    for name, rows in scores.items():
        kl, auc = np.mean(rows, axis=0)
        print(f"{name:12s} KL {kl:7.3f}  AUC {auc:.3f}")
    print(f"{time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
