"""Self-supervised one-shot segmentation episodes from saliency masks.

The pipeline: a salient object is cut in two by a foreground-balanced
(optionally tilted) line, one piece becomes the support annotation and
the other the query target, the two views are augmented independently,
and pixels the support piece covers in the query view are labelled
IGNORE so the loss never contradicts itself. Packs of such episodes
are generated deterministically and evaluated with a repeated-sampling
mIoU protocol.
"""
from .augment import (
    AugmentationSpec,
    GeometricParams,
    PhotometricParams,
    apply_geometric,
    apply_geometric_mask,
    apply_photometric,
    augment_view,
    sample_augmentation,
)
from .episodes import (
    DEFAULT_OUT_SIZE,
    IGNORE_LABEL,
    Episode,
    EpisodeConfig,
    compute_ignore_label,
    make_episode,
)
from .errors import (
    ChecksumMismatchError,
    DimensionMismatchError,
    EmptyMaskError,
    EpisplitError,
    InsufficientForegroundError,
    InsufficientImagesError,
    MissingFileError,
    MissingPredictionError,
    MissingSaliencyError,
    ParseError,
    UnknownDatasetError,
    UnsupportedFormatError,
    ValidationError,
)
from .generate import GenerationStats, episode_rng, generate_dataset
from .geometry import (
    Axis,
    Side,
    SplitConfig,
    SplitLine,
    SplitMode,
    SplitOutcome,
    apply_split,
    balance_coordinate,
    foreground_count,
    partition_mask,
    sample_split_line,
    side_of,
)
from .metrics import (
    ClassAccumulator,
    EvalReport,
    TestTask,
    evaluate,
    iou,
    sample_test_tasks,
    score_tasks,
)

__version__ = "0.1.0"
