"""CP-net preference toolkit: exact order distances and learned approximations."""

from .cpnet import (
    BudgetExceededError,
    CPNet,
    CPNetError,
    CPNetFormatError,
    CPNetValidationError,
    CPTable,
    PartialOrder,
    Variable,
    count_cpnets,
    dominates,
    enumerate_cpnets,
    index_outcome,
    induced_order,
    is_degenerate_edge,
    load_cpnet,
    optimal_outcome,
    outcome_index,
    parse_cpnet,
    save_cpnet,
    serialize_cpnet,
    topological_order,
    validate,
    worsening_flips,
)
from .metric import DistanceValue, ktd, ktd_matrix, pair_penalty, qualitative_compare
from .encoding import (
    EncodedSample,
    adjacency_matrix,
    cpt_matrix,
    encode_pair,
    net_features,
    normalized_laplacian,
)
from .data import (
    Dataset,
    GenConfig,
    bin_label,
    build_dataset,
    dataset_from_library,
    distance_histogram,
    generate_library,
    load_dataset,
    random_cpnet,
    save_dataset,
)
from .nn import (
    Autoencoder,
    LayerSpec,
    Model,
    TrainConfig,
    build_autoencoder,
    build_model,
    forward,
    load_model,
    predict,
    pretrain_autoencoder,
    save_model,
    train,
    transfer_weights,
)
from .evaluation import (
    ClassificationReport,
    TimingReport,
    benchmark_runtime,
    classification_report,
    cohen_kappa,
    f_score,
    mae,
)

__version__ = "0.1.0"
