"""mintaudit: membership-inference audit toolkit for small image models.

Determine, from a model's internal activations, whether a sample was part of
its training set: tap the model, extract auditable features, train audit
classifiers, run the accuracy grid, and serve per-sample membership reports.
"""

from .aad import (
    AuditableDataKind,
    FeatureMaps,
    FeatureSet,
    FeatureVector,
    batch_extract,
    feature_set_from_records,
    full_maps,
    vectorize_max,
)
from .audited import (
    ALL_TAPS,
    AadRecord,
    AuditedModel,
    ModelOutcome,
    TapConfig,
    build_toy_audited_model,
    infer_with_taps,
    train_audited,
)
from .classifiers import (
    CnnMintSpec,
    MembershipScore,
    MintClassifier,
    VanillaMintSpec,
    build_cnn,
    build_vanilla,
    predict,
    predict_scores,
    train_mint,
)
from .data import (
    DatasetPartition,
    Membership,
    PreprocessSpec,
    Sample,
    SplitPlan,
    SyntheticDataConfig,
    generate_synthetic_dataset,
    ingest_image_dir,
    load_dataset,
    plan_split,
    save_dataset,
)
from .feature_cache import cache_features, load_features
from .harness import (
    AccuracyTable,
    ControlResult,
    ExperimentGrid,
    compute_accuracy,
    emit_report,
    run_grid,
    write_report_files,
)
from .registry import (
    AuditRegistry,
    MembershipReport,
    audit_sample,
    load_audited_model,
    load_classifier,
    save_audited_model,
    save_classifier,
)

__version__ = "0.1.0"
