"""Point-drag image editing on a toy style-based generator.

Two-stage pipeline: a denoising latent regularizer is pretrained on
corrupted latents, then an autoregressive latent predictor is trained
jointly with it to regress latent motion sequences from point-pair
conditioning; edits are a single forward rollout with no optimization.
"""

from .config import RunConfig
from .correspondence import (
    Patch,
    PointPair,
    extract_patch,
    load_point_pairs,
    match_points,
    save_point_pairs,
)
from .errors import (
    CheckpointError,
    NoCorrespondenceError,
    ParameterError,
    PointsFileError,
    ShapeError,
    StateError,
    TrainingDivergenceError,
    UndefinedRatioError,
)
from .evaluation import (
    MetricReport,
    ablation_n_eval,
    landmark_manipulation_eval,
    mdd,
    mdd_curve_eval,
    mean_distance,
    paired_reconstruction_eval,
)
from .generator import GeneratorConfig, SceneParams, ToyGenerator
from .inference import EditRequest, EditResult, edit, save_edit_result
from .latent_core import (
    CorruptionSpec,
    EditLayerSpec,
    LatentSequence,
    PerturbSpec,
    corrupt,
    make_motion_sequence,
    perturb_step,
    split_layers,
)
from .persistence import (
    DragModels,
    load_joint_checkpoint,
    load_stage1_checkpoint,
    save_joint_checkpoint,
    save_stage1_checkpoint,
)
from .predictor import (
    PredictorModel,
    Stage2Config,
    drag_loss,
    encode_context,
    pred_loss,
    predict_teacher_forced,
    total_loss,
    train_stage2,
)
from .regularizer import RegularizerModel, Stage1Config, reg_loss, regularize, train_stage1

__version__ = "0.1.0"
