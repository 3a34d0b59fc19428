import numpy as np
import pytest

from gazeact.features import GridConfig
from gazeact.pipeline import (
    RecognitionConfig,
    channel_names,
    prepare_corpus,
    run_recognition,
    sample_points,
    split_by_label,
)
from gazeact.saliency import center_bias_saliency
from gazeact.synth import synth_dataset

SMALL = dict(grids=(GridConfig(1, 1, 1), GridConfig(2, 2, 1)), vocab_size=8, points_per_frame=3, flow_iterations=30)


@pytest.fixture(scope="module")
def corpus():
    c = synth_dataset(["moving_square", "blinking_circle"], 4, n_subjects=3, rng_seed=0, size=32, frames=10)
    videos = prepare_corpus(c.volumes, RecognitionConfig(**SMALL))
    return c, videos


def test_split_is_per_class_and_deterministic():
    labels = {f"{c}{i}": c for c in "ab" for i in range(4)}
    train, test = split_by_label(labels)
    assert sorted(train + test) == sorted(labels)
    assert test == ["a1", "a3", "b1", "b3"]
    assert split_by_label(labels) == (train, test)


def test_prepare_corpus_independent_of_jobs(corpus):
    c, videos = corpus
    again = prepare_corpus(c.volumes, RecognitionConfig(**SMALL), jobs=3)
    for v in videos:
        assert np.array_equal(videos[v].flow.u, again[v].flow.u)
        assert videos[v].harris_counts == again[v].harris_counts


@pytest.mark.parametrize("sampler", ["saliency", "uniform", "center-bias", "fixations", "harris"])
@pytest.mark.parametrize("encoder", ["bow", "o2p"])
def test_recognition_runs(corpus, sampler, encoder):
    c, videos = corpus
    train, test = split_by_label(c.labels)
    cfg = RecognitionConfig(encoder=encoder, sampler=sampler, **SMALL)
    r = run_recognition(videos, c.labels, train, test, cfg, rng_seed=1, fixations=c.fixations)
    assert set(r.average_precision) == {"moving_square", "blinking_circle"}
    assert all(0.0 <= ap <= 1.0 for ap in r.average_precision.values())
    assert 0.0 <= r.accuracy <= 1.0 and set(r.predictions) == set(test)
    d = r.to_dict()
    assert d["mean_ap"] == pytest.approx(r.mean_ap) and d["config"]["sampler"] == sampler


def test_recognition_is_seeded(corpus):
    c, videos = corpus
    train, test = split_by_label(c.labels)
    cfg = RecognitionConfig(**SMALL)
    a = run_recognition(videos, c.labels, train, test, cfg, 4, c.fixations)
    b = run_recognition(videos, c.labels, train, test, cfg, 4, c.fixations)
    assert a.average_precision == b.average_precision


def test_sampler_point_counts(corpus):
    c, videos = corpus
    v = sorted(videos)[0]
    seed = np.random.SeedSequence(0)
    pts = sample_points(v, videos[v], RecognitionConfig(sampler="uniform", **SMALL), c.fixations, seed)
    assert len(pts) == 3 * 10
    harris_rate = dict(SMALL, points_per_frame=None)
    pts = sample_points(v, videos[v], RecognitionConfig(sampler="uniform", **harris_rate), c.fixations, seed)
    assert len(pts) == sum(videos[v].harris_counts)
    with pytest.raises(ValueError):
        sample_points(v, videos[v], RecognitionConfig(sampler="predicted", **SMALL), c.fixations, seed)
    maps = {v: center_bias_saliency(v, videos[v].volume.shape)}
    assert len(sample_points(v, videos[v], RecognitionConfig(sampler="predicted", **SMALL), c.fixations, seed, maps)) == 30


def test_external_grams_join_the_kernel_stack(corpus):
    c, videos = corpus
    train, test = split_by_label(c.labels)
    ids = sorted(c.labels)
    # an oracle kernel: 1 for same-class pairs
    lab = np.array([c.labels[v] for v in ids])
    oracle = (lab[:, None] == lab[None, :]).astype(float)
    cfg = RecognitionConfig(sampler="uniform", **SMALL)
    r = run_recognition(videos, c.labels, train, test, cfg, 0, c.fixations, extra_grams={"oracle": oracle}, gram_ids=ids)
    assert r.accuracy == 1.0
    with pytest.raises(ValueError):
        run_recognition(videos, c.labels, train, test, cfg, 0, c.fixations, extra_grams={"o": oracle[:2, :2]}, gram_ids=ids[:2])


def test_config_validation():
    with pytest.raises(ValueError):
        RecognitionConfig(sampler="random")
    with pytest.raises(ValueError):
        RecognitionConfig(encoder="fisher")
    assert len(channel_names(RecognitionConfig())) == 14
