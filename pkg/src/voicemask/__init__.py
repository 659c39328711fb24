"""Voice sanitization toolkit.

Randomized frequency-warping voice conversion inside a PSOLA loop, plus DTW
keyword spotting with safeword substitution. A randomized-response protocol
estimates which words users consider sensitive.
"""
from .audio import (AudioClip, FeatureMatrix, SilenceGap, Spectrum, UnsupportedFormatError,
                    WavFormatError, detect_silence_gaps, fft_frame, ifft_frame, read_wav, stft,
                    write_wav)
from .bench import BenchReport, benchmark
from .conversion import (ConversionConfig, Segment, SegmentationWarning, attack_reverse,
                         convert_voice, convert_voice_segmented, plan_segments, sanitize_voice,
                         spectral_log_distance, warp_spectrum)
from .keywords import (Detection, KeywordTemplate, RestoreWarning, SafewordBank, SpotterConfig,
                       SubstitutionRecord, TemplateStore, dtw_distance, enroll_keyword,
                       restore_transcript, spot_keywords, substitute_keywords, update_template)
from .pitch import PitchMarks, mark_pitch, psola_identity, psola_resynthesize, segment_frames
from .praka import (AggregateEstimate, KeywordReport, PrakaClient, ProtocolError, aggregate,
                    epsilon, error_bound, make_report, verify_dp)
from .warp import (IDENTITY, Bilinear, Compound, ConfigurationError, Direction, DistortionBand,
                   KindPolicy, Quadratic, attack_reduce_residual, distortion_strength,
                   inverse_warp, sample_warp_params, warp_bilinear, warp_compound,
                   warp_quadratic)

__version__ = "0.1.0"
