"""racsim: sampling and remote estimation over random-access collision channels.

Discrete-time Monte-Carlo simulator for M independent Gauss-Markov
sources reporting to a fusion center through a slotted collision
channel with optional erasures, together with the policy zoo
(stationary randomized, pseudo-Bayesian ALOHA, age- and error-threshold
thinning, centralized max-age and max-error scheduling), interval
statistics and their closed-form validation identities, an independent
first-passage oracle, and a sweep/CLI harness.
"""

from .channel import ChannelConfig, SlotKind, SlotOutcome, resolve_slot
from .estimator import ErrorVector, ReceiverView, apply_slot, error_vector
from .harness import (ConfigError, SimConfig, SweepSpec, calibrate_sat,
                      run_replications, run_single, run_sweep)
from .metrics import (IntervalRecord, MetricsAccumulator, MetricsReport,
                      RecordSet, check_alpha_fixed_point, check_wald,
                      decompose_naee)
from .oracle import (HittingMoments, PathCapExceeded, brownian_hitting_moments,
                     random_walk_hitting_moments)
from .policies import (AlohaState, NodeActivation, PolicyConfig, PolicyKind,
                       decide_centralized, decide_decentralized,
                       default_lambda_hat, default_threshold, update_aloha)
from .process import (SourceEnsemble, SourceState, increment_window_sum,
                      make_streams, step_sources)
from .rng import NoiseStream, replication_seed, stream_key

__version__ = "0.1.0"
