"""Click-guided interactive contour revision for 2D medical image segmentation.

Given an image, an imperfect segmentation mask, and one or more boundary
clicks, a trained revision network produces an updated mask; repeating the
loop converges the contour toward what the user wants.  The package covers
the geometry and metrics, click simulation, the network and its losses,
online interactive training, a simulated-user evaluation harness, and a
real-time HTTP revision service.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .clicks import (
    CLICK_RADIUS_PX,
    Click,
    ClickProbability,
    click_distribution,
    encode_clicks,
    oracle_click,
    sample_training_click,
)
from .data import (
    DatasetManifest,
    ManifestEntry,
    Provenance,
    SliceRecord,
    VolumeRecord,
    crop_axial,
    ingest_volume,
    synth_dataset,
)
from .evaluate import (
    BenchmarkReport,
    RevisionTrace,
    aggregate,
    compute_metrics,
    emit_report,
    evaluate_manifest,
    simulate_revision,
)
from .geometry import (
    PIXEL_UNITS,
    ContourPointSet,
    DistanceField,
    MetricReport,
    PixelSpacing,
    contour_polygons,
    dice,
    distance_field,
    extract_contour,
    hd95,
    largest_error_point,
    mask_to_rle,
    rle_to_mask,
)
from .losses import LossBreakdown, balanced_total, dice_loss, hd_loss
from .network import NetworkConfig, RevisionInput, RevisionUNet, count_parameters, to_mask
from .training import (
    DegradeParams,
    OptimizerSchedule,
    RolloutConfig,
    TrainingConfig,
    TrainingSample,
    build_online_sample,
    degrade_mask,
    train,
)

__version__ = "0.1.0"
