"""Content-aware audio sampling for intermittently powered sensors.

A pure-numpy library covering the whole pipeline: the 5 kHz spectral
front end, frequency-domain imputation of perforated clips, per-segment
importance scoring and prediction, a compact CNN classifier, a
charge/discharge energy model with naive baseline samplers, the
content-aware scheduler, and an experiment harness with a CLI.
"""

from .audio_core import (
    AudioClip,
    AudioFormatError,
    SegmentView,
    Spectrogram,
    analyze_clip,
    load_wav,
    mel_filterbank,
    mel_project,
    save_wav,
    segment_features,
    segment_view,
    stft,
)
from .classifier import (
    ClassifierModel,
    TrainConfig,
    forward,
    forward_batch,
    load_classifier,
    parameter_counts,
    predict_batch,
    save_classifier,
    train_classifier,
    true_class_score,
)
from .energy_model import (
    SENSE,
    SKIP,
    EnergyState,
    SimTrace,
    cis1_sampler,
    make_state,
    periodic_sampler,
    replay,
    step,
    vanilla_sampler,
)
from .explainer import (
    GlobalImportance,
    ImportanceVector,
    aggregate_global,
    fit_local,
    locality_weight,
    perturb,
    ridge_weights,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    SyntheticSpec,
    gen_synthetic,
    informative_recall,
    load_wav_dir,
    read_report,
    report,
    run_experiment,
    split_train_test,
)
from .imputation import frame_mask, impute, impute_oracle, zero_fill
from .predictor import (
    PredictorDataset,
    PredictorModel,
    build_dataset,
    load_predictor,
    predict_next,
    save_predictor,
    train_predictor,
)
from .scheduler import (
    Models,
    SamplingPlan,
    SchedulerConfig,
    adapt,
    initial_plan,
    run_soundsieve,
)

__version__ = "0.1.0"
