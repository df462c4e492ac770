from ._evaluation import (
    DiceReport,
    dice,
    endpoint_error,
    propagate_labels,
    volume_stats,
)
from ._grid_search import dice_scorer, dissimilarity_scorer, grid_search
from ._mind import (
    MindField,
    MindParams,
    compute_mind,
    mind_pointwise_dissimilarity,
    mind_pointwise_map,
    mind_total,
    patch_distance,
)
from ._phantom import Phantom, PhantomSpec, generate
from ._registration import (
    RegistrationConfig,
    RegistrationResult,
    build_measure,
    register_deformable,
    total_cost,
)
from ._regularization import regularizer_l2, regularizer_tv
from ._rigid import RigidResult, register_rigid, rigid_field
from ._similarity import (
    CombinedMeasure,
    CombineParams,
    JointHistogram,
    LnccMeasure,
    MindMeasure,
    NmiMeasure,
    build_joint_histogram,
    combine_scale,
    combined_dissimilarity,
    entropy,
    lncc_dissimilarity,
    mind_dissimilarity,
    mind_gradient,
    nmi_dissimilarity,
    nmi_gradient,
)
from ._stitch import TilePlan, parse_mapper, plan_tiles, stitch_map
from ._transform import (
    ControlGrid,
    DenseField,
    compose,
    interpolate_dense,
    invert,
    inverse_consistency_step,
    pullback,
    warp,
)
from ._volume import (
    LabelVolume,
    Volume,
    gaussian_pyramid,
    rescale_intensity,
    resample_isotropic,
)

__all__ = (
    "Volume",
    "LabelVolume",
    "resample_isotropic",
    "rescale_intensity",
    "gaussian_pyramid",
    "MindParams",
    "MindField",
    "patch_distance",
    "compute_mind",
    "mind_pointwise_dissimilarity",
    "mind_pointwise_map",
    "mind_total",
    "JointHistogram",
    "CombineParams",
    "NmiMeasure",
    "MindMeasure",
    "LnccMeasure",
    "CombinedMeasure",
    "build_joint_histogram",
    "entropy",
    "nmi_dissimilarity",
    "nmi_gradient",
    "mind_dissimilarity",
    "mind_gradient",
    "lncc_dissimilarity",
    "combine_scale",
    "combined_dissimilarity",
    "ControlGrid",
    "DenseField",
    "interpolate_dense",
    "pullback",
    "warp",
    "compose",
    "invert",
    "inverse_consistency_step",
    "regularizer_tv",
    "regularizer_l2",
    "RegistrationConfig",
    "RegistrationResult",
    "build_measure",
    "total_cost",
    "register_deformable",
    "RigidResult",
    "register_rigid",
    "rigid_field",
    "grid_search",
    "dice_scorer",
    "dissimilarity_scorer",
    "TilePlan",
    "plan_tiles",
    "stitch_map",
    "parse_mapper",
    "DiceReport",
    "dice",
    "propagate_labels",
    "volume_stats",
    "endpoint_error",
    "PhantomSpec",
    "Phantom",
    "generate",
)
