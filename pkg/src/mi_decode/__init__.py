"""Two-class EEG motor-imagery decoding: band-pass + CAR preprocessing,
sliding-window features (flattened time or Welch PSD), PCA + LDA
classification, and per-trial evidence accumulation, with a deterministic
synthetic-session generator for end-to-end testing."""

from .version import __version__
from .errors import DecodeError
from .session import (
    ClassLabel,
    EventKind,
    EventMarker,
    Recording,
    Sensor,
    Session,
    SessionKind,
    SessionMeta,
    import_csv,
    load_session,
    save_session,
)
from .dsp import (
    BandpassSpec,
    FilterCoefficients,
    PreprocessParams,
    Trial,
    WindowSet,
    apply_car,
    design_bandpass,
    extract_trials,
    filter_offline,
    preprocess,
    window_trials,
    windows_from_recording,
)
from .features import (
    FeatureMatrix,
    PcaTransform,
    WelchSpec,
    pca_fit,
    pca_transform,
    psd_features,
    welch_psd,
)
from .classify import LinearClassifier, fit_classifier, lda_fit
from .evidence import (
    EvidenceConfig,
    EvidenceOutcome,
    Outcome,
    TrialReport,
    accumulate,
    grid_search,
    replay_session,
    stream_replay,
    stream_to_report,
)
from .evaluate import (
    CvReport,
    Decoder,
    FeatureConfig,
    eval_samples,
    finetune_experiment,
    load_decoder,
    pca_sweep,
    runwise_cv,
    save_decoder,
    train_decoder,
)
from .synth import SynthSpec, generate_session, generate_study

__all__ = [
    "__version__",
    "DecodeError",
    "ClassLabel",
    "EventKind",
    "EventMarker",
    "Recording",
    "Sensor",
    "Session",
    "SessionKind",
    "SessionMeta",
    "import_csv",
    "load_session",
    "save_session",
    "BandpassSpec",
    "FilterCoefficients",
    "PreprocessParams",
    "Trial",
    "WindowSet",
    "apply_car",
    "design_bandpass",
    "extract_trials",
    "filter_offline",
    "preprocess",
    "window_trials",
    "windows_from_recording",
    "FeatureMatrix",
    "PcaTransform",
    "WelchSpec",
    "pca_fit",
    "pca_transform",
    "psd_features",
    "welch_psd",
    "LinearClassifier",
    "fit_classifier",
    "lda_fit",
    "EvidenceConfig",
    "EvidenceOutcome",
    "Outcome",
    "TrialReport",
    "accumulate",
    "grid_search",
    "replay_session",
    "stream_replay",
    "stream_to_report",
    "CvReport",
    "Decoder",
    "FeatureConfig",
    "eval_samples",
    "finetune_experiment",
    "load_decoder",
    "pca_sweep",
    "runwise_cv",
    "save_decoder",
    "train_decoder",
    "SynthSpec",
    "generate_session",
    "generate_study",
]
