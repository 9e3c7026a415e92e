"""Closed-loop heart-rate-adaptive training engine.

Stream ECG in, detect beats, classify heart rate into age-derived zones, and
drive a pacing agent whose longitudinal offset tells the rider to speed up or
ease off. Ships simulated riders for headless closed-loop runs, session
recording, adherence metrics, a line-delimited JSON socket service, and a CLI.
"""

from .adaptation import (AdaptationConfig, BikeComputerView, Condition,
                         NpcState, adaptive_offset, baseline_view,
                         random_offset_target, step_npc)
from .dsp import (BandpassFilter, EcgPipeline, EcgSample, FilterSpec,
                  HrEstimate, HrEstimator, QrsDetector, RPeak,
                  design_bandpass, frequency_response)
from .errors import (ParameterError, StateError, StreamError,
                     UndefinedMetricError)
from .metrics import (SessionMetrics, compute, mean_normalized_hr,
                      optimal_hr_ratio)
from .rider import (BikePhysics, EcgSynthesizer, PolicyRunner, RiderModel,
                    RiderPolicy, hr_step, power_to_speed, required_power,
                    synth_ecg)
from .session import (LoopState, Seeds, Session, SessionConfig, SessionLog,
                      load_log, run_simulated, save_log, start)
from .zones import (AthleteProfile, ZoneModel, classify, compute_zone_model)

__version__ = "0.1.0"
