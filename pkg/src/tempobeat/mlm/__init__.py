from .dense import dense_blup, oracle_fit_dense
from .design import (
    COMPONENTS,
    FACTORS,
    Design,
    ModelSpec,
    build_design,
    design_from_arrays,
    empty_spec,
    event_day_mask,
    full_spec,
    restricted_spec,
    standard_spec,
)
from .fit import (
    FixedEffectEstimate,
    ModelFit,
    VarianceComponents,
    fd_gradient,
    fit_ml,
    fixed_part,
    lr_test_vs_linear,
    ols_loglik,
    predict_conditional,
    profiled_deviance,
)

__all__ = [
    "COMPONENTS", "FACTORS", "Design", "FixedEffectEstimate", "ModelFit", "ModelSpec",
    "VarianceComponents", "build_design", "dense_blup", "design_from_arrays", "empty_spec",
    "event_day_mask", "fd_gradient", "fit_ml", "fixed_part", "full_spec", "lr_test_vs_linear",
    "oracle_fit_dense", "ols_loglik", "predict_conditional", "profiled_deviance",
    "restricted_spec", "standard_spec",
]
