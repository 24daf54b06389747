from .base import Burst, FeatureVector, extract_bursts, interpolate
from .sequence import etresp_features, kfp_features, psc
from .space import (
    EXTRACTORS,
    VectorSpace,
    featurize,
    fit_transform,
    fit_vector_space,
    get_extractor,
)
from .wfin import (
    WFIN_CATEGORIES,
    WFINPP_EXTRA_CATEGORIES,
    WfinConfig,
    wfin_features,
    wfinpp_extras,
    wfinpp_features,
)

__all__ = [
    "Burst", "FeatureVector", "extract_bursts", "interpolate",
    "psc", "kfp_features", "etresp_features",
    "wfin_features", "wfinpp_extras", "wfinpp_features", "WfinConfig",
    "WFIN_CATEGORIES", "WFINPP_EXTRA_CATEGORIES",
    "EXTRACTORS", "VectorSpace", "featurize", "fit_transform", "fit_vector_space", "get_extractor",
]
