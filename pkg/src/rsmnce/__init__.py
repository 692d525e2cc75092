"""Replicated Softmax topic model with CD and partial-noise NCE trainers."""
from .alias import AliasTable, build_alias, sample, sample_many
from .cd import CdConfig, GibbsState, cd_minibatch_update, gibbs_step, train_cd
from .corpus import (
    BowDocument,
    Corpus,
    TransformError,
    Vocabulary,
    apply_idf,
    apply_log_count,
    build_vocabulary,
    empirical_distribution,
    tokenize,
    vectorize,
)
from .evaluation import (
    FeatureMatrix,
    RetrievalReport,
    classify_accuracy,
    extract_features,
    retrieve,
    train_classifier,
)
from .kernels import active_backend, available_backends, use_backend
from .nce import (
    BundleBatch,
    NceConfig,
    NoiseBundle,
    generate_bundles,
    nce_gradient,
    nce_objective,
    noise_log_prob,
    pns_generate,
    train_nce,
    uce_log_ratio,
)
from .rsm import (
    FreeEnergyGradient,
    ParameterBlowUp,
    RsmModel,
    RsmParams,
    energy,
    free_energy,
    free_energy_gradient,
    hidden_posterior,
    init_params,
    load_model,
    log_partition_constant,
    log_prob,
    save_model,
    visible_softmax,
)

__version__ = "0.1.0"
