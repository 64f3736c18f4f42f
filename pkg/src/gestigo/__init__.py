"""Skeleton-based dynamic hand-gesture recognition toolkit.

The pipeline condenses a 3D hand-skeleton sequence into one static RGB
image per configured view orientation (pose plus fading fingertip
trails), classifies the images with a shared-weight multi-stream CNN,
and fuses the per-stream probabilities through a small ensemble-tuner
network whose output is the decision. Training, evaluation, the
view-orientation search, and a real-time WebSocket service are built on
the same primitives; `gestigo.cli` exposes them as subcommands.
"""

from .condense import (
    RenderConfig, ViewOrientation, condense, condense_views, find_orientation,
    fit_sequence, project, resample_frames, resample_sequence, vo_table,
)
from .datasets import (
    DATASET_IDS, DatasetManifest, JointSchema, SkeletonSequence,
    dataset_class_names, dataset_schema, load_sequence, parse_dataset,
    read_manifest, subset_manifest, write_manifest,
)
from .errors import (
    ArgumentError, ConfigError, GestigoError, GraphError, NotFoundError,
    NumericError, ParseError, SchemaError, ShapeError, TransportError,
)
from .evalharness import (
    EvalReport, VoSearchState, confusion_heatmap, confusion_pairs, evaluate,
    vo_search, write_report, write_search_report,
)
from .model import (
    GestureNet, ModelConfig, StreamPrediction, decode_pseudo_image,
    homoscedastic_loss, predict, predict_from_images, probs_to_pseudo_image,
    pseudo_float_image, swipe_subset_config,
)
from .service import (
    GestureService, open_server, read_replay_file, replay_client,
    replay_sequence, run_server, write_replay_file,
)
from .synth import generate_dataset_tree, synthetic_sequence
from .training import (
    EncodedDataset, TrainReport, TrainSettings, augment, encode_dataset_images,
    encode_for_training, load_encoded_dataset, train,
)

__version__ = "0.1.0"
