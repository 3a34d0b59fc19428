"""Eye-movement consistency metrics, learnt saliency maps and saliency-driven action recognition."""
from .aoi import AoiString, AoiTrack, assign_scanpaths, discover_aois, extend_aois, random_aoi_strings
from .config import ConfigError, RunConfig, parse_config
from .consistency import (
    MarkovModel,
    RocResult,
    align_score,
    alignment_consistency,
    markov_consistency,
    markov_fit,
    sequential_consistency_report,
    spatial_agreement,
    task_influence_pvalues,
)
from .core import (
    FixationRecord,
    FixationSet,
    FrameGrid,
    GazeError,
    VideoMeta,
    empirical_frame_map,
    load_manifest,
    parse_fixation_log,
)
from .detector import DetectorSpec, build_training_set, detector_apply, train_detector
from .features import (
    DescriptorExtractor,
    FlowField,
    GridConfig,
    flow_bimodality_map,
    harris3d_response,
    harris_interest_points,
    hog3d,
    horn_schunck_flow,
    mbh,
    motion_feature_map,
)
from .learn import (
    LinearModel,
    MklModel,
    average_precision,
    bow_encode,
    chi2_feature_map,
    chi2_rbf_gram,
    kmeans,
    mkl_train,
    o2p_encode,
    svm_train_linear,
)
from .pipeline import RecognitionConfig, RecognitionResult, prepare_corpus, run_recognition, split_by_label
from .saliency import (
    InterestPoint,
    SaliencyMap,
    build_gt_saliency,
    center_bias_saliency,
    combine_maps,
    fixation_interest_points,
    foveation_rate,
    kl_divergence,
    saliency_auc,
    sample_interest_points,
)
from .synth import SynthCorpus, synth_dataset

__version__ = "0.1.0"
