"""
gaitid - Gait-based legitimate user identification

Signal loading and windowing, 72 time-series features per window, PCA/ESP
projection, kernel ELM classification with PSO-tuned parameters, and the
k-fold / leave-one-out protocols that score them.
"""
from gaitid.errors import (ConfigError, DegenerateInputError, EmptyInputError, GaitIdError, InvalidInputError,
                           InvalidLabelError, InvalidParameterError, OptimizationError, ParseError, ShapeError,
                           StratificationError, TrainingError)
from gaitid.evaluation import (EvalReport, Split, TrainedPipeline, TwoStageIdentifier, benchmark,
                               confidence_interval, identify_two_stage, loso_splits, run_experiment,
                               session_splits, stratified_kfold)
from gaitid.features import (N_FEATURES, FeatureMatrix, NormalizerParams, apply_normalizer, extract_feature_vector,
                             extract_features, feature_schema, fit_normalizer)
from gaitid.kelm import KELMClassifier, KELMModel, KernelParams, kelm_predict, kelm_train, wavelet_kernel
from gaitid.pipeline_config import LosoMode, PipelineConfig, Protocol, Target
from gaitid.projection import (ESPModel, Method, PCAModel, Projector, esp_fit, esp_transform, pca_fit,
                               pca_transform, sammon_stress)
from gaitid.pso import PSOConfig, pso_optimize, tune_kernel
from gaitid.signal_io import (Layout, Sensor, SignalRecording, SubActivity, Window, load_dataset, load_recording,
                              moving_average_filter, segment_windows)
from gaitid.stage_timer import StageTimer, timed
from gaitid.synthetic import SyntheticSpec, generate_synthetic_dataset

__version__ = "1.0.0"
