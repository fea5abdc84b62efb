"""Conditional ground-state quantum beats in a two-mode optical cavity.

Simulation (quantum-jump Monte Carlo with drive-gating feedback), closed
form shift/decoherence predictions, time-tagged photon record handling and
correlation/post-selection analysis.
"""

__version__ = "0.1.0"

from .correlation import (AnalysisError, CorrelationResult, FitError, FitResult,
                          feedback_epoch_starts, feedback_windows, fft_spectrum,
                          filter_by_jump_count, fit_damped_cosine, g2_estimate,
                          gated_stop_rate, spectrum_peak, strip_truth, time_filter)
from .operators import (HilbertSpace, OperatorSet, build_effective_hamiltonian,
                        build_operators, build_space, coherent_cavity_state)
from .params import (ConfigError, PhysicalParams, load_params, params_from_dict,
                     params_to_dict, read_config, steady_alpha, write_config)
from .records import (Channel, DetectionRecord, H_DETECTORS, SIDE_CHANNELS,
                      RecordParseError, RecordValidationError,
                      apply_detector_model, make_record, merge_records,
                      poisson_record, read_record, validate_record, write_record)
from .theory import (ConditionalState, ShiftReport, TheoryDomainError,
                     ac_stark_shift, beat_model, beat_predictions,
                     decoherence_rate, excited_state_at, ground_state_at,
                     jump_rate, jump_shift, light_shift, n_jump_state,
                     pair_jump_factor, pair_rates, per_jump_factor,
                     poisson_coherence, shift_report)
from .trajectory import (AtomModel, EnsembleResult, FeedbackProtocol,
                         TrajectoryConfig, TrajectoryEngine, TrajectoryError,
                         evolve_trajectory, feedback_envelope, run_ensemble,
                         transit_coupling)
