"""Far-field speech front-end: mask-driven WPE, reference-channel MVDR, log-mel."""
__version__ = "0.1.0"

from .beamform import (ReferenceSpec, apply_beamformer, average_masks, estimate_psd,
                       mvdr_filter, mvdr_pipeline, select_reference)
from .dereverb import (PredictionFilter, UtteranceTooShortError, WpeConfig,
                       apply_prediction_filter, stack_delayed, variance_from_mask,
                       variance_from_signal, wpe_iterative, wpe_normal_equations,
                       wpe_oneshot)
from .features import MelConfig, extract_features, logmel, mel_matrix, mvn
from .masks import (MaskProviderSpec, MlpWeights, clamp_activation, energy_sad,
                    make_mask, mlp_infer, oracle_irm)
from .pipeline import EnhanceResult, PipelineConfig, enhance_utterance
from .stft import AudioBuffer, StftConfig, StftTensor, istft, stft, validate_cola

