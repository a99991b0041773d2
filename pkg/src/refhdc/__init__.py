"""Federated hyperdimensional classification with sub-model training and
subset refining, plus the matching cost model."""

from .costs import c1, c2, c3, cost_baseline, cost_refhdc, rounds_to_target
from .datasets import (
    ClientShard,
    Dataset,
    PartitionSpec,
    load_cifar10_binary,
    load_from_manifest,
    load_mnist_idx,
    load_uci_har,
    partition,
)
from .errors import ConfigError, InvalidArgumentError, ParseError, ProtocolError
from .features import (
    NormalizationSpec,
    RffmBasis,
    apply_normalizer,
    fit_normalizer,
    make_rffm,
    rffm_transform,
    rffm_transform_batch,
)
from .fedsim import (
    FederatedRun,
    FederationConfig,
    RoundRecord,
    aggregate,
    concatenate,
    run_baseline,
    run_refhdc,
    sample_positions,
)
from .hdspace import ProjectionBasis, cosine_distance, encode, encode_batch, make_basis, slice_columns
from .prototype import (
    PositionSubset,
    PrototypeModel,
    accuracy,
    bundle_init,
    predict,
    predict_batch,
    retrain,
    retrain_epoch,
)

__version__ = "0.1.0"
