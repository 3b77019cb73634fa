"""Correlation-volume toolkit for translation-probed optical-flow matching."""

from .attack import (
    AttackSweepConfig,
    ShiftSpec,
    argmax_match,
    attack_residual,
    build_argmax_matcher,
    half_shift,
    mask_contaminated,
    run_attack_sweep,
    sample_shift,
    sample_shifts,
    shift_image,
    unshift_flow,
)
from .corr import (
    CfaParams,
    CorrelationVolume,
    cfa_backward,
    cfa_correlation,
    dot_correlation,
    extract_query_heatmap,
    heatmap_to_image,
    identity_cfa_params,
    load_volume,
    normalize_volume,
    random_cfa_params,
    save_volume,
)
from .errors import (
    CheckFailure,
    DimensionError,
    FlowcorrError,
    FormatError,
    ParameterError,
    UndefinedMetricError,
    UsageError,
)
from .features import (
    FeatureMap,
    Image,
    SyntheticScene,
    generate_translated_scene,
    load_feature_map,
    patchify_features,
    read_image,
    save_feature_map,
    write_image,
)
from .flowfield import (
    FlowField,
    constant_flow,
    read_flo,
    translate_field,
    upsample_flow,
    write_flo,
)
from .gradcheck import check_cfa_gradients, check_sstrans_gradients, run_gradient_checks
from .metrics import MetricReport, aepe, binned_aepe, fl_outlier_rate, metric_report
from .sstrans import (
    ExpandedAttentionParams,
    ModeParams,
    expanded_attention,
    mode_self_attention,
    random_sstrans_params,
    sstrans_backward,
    sstrans_forward,
)
from .tensor_ops import (
    as_tensor,
    finite_difference_gradient,
    layer_normalize,
    matmul,
    softmax,
)
from .weights import (
    cfa_from_records,
    cfa_records,
    read_weights,
    sstrans_from_records,
    sstrans_records,
    write_weights,
)

__version__ = "0.1.0"
