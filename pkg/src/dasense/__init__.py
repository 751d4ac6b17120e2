"""Data-aided sensing over a compressive random-access uplink.

Simulates a field of nodes with jointly sparse readings, an access point
that requests specific nodes through an error-prone compressive downlink,
and lasso-based recovery of the whole field from the readings that actually
arrive.
"""

from .analytics import (
    ErrorProbs,
    expected_active_bound,
    expected_active_exact,
    prob_fa_closed,
    prob_fa_exact,
    prob_md_closed,
    prob_md_exact,
    qfunc,
    qfunc_chiani,
)
from .downlink import ChannelDraw, DownlinkOutcome, LinkParams, compute_sinr, draw_gains, simulate_request
from .engine import (
    ProtocolConfig,
    RoundRecord,
    RunTrace,
    Trace,
    run_downlink_trials,
    run_experiment,
)
from .recovery import (
    DebiasResult,
    Estimate,
    LassoResult,
    MeasurementSet,
    debias,
    default_penalty,
    kkt_gaps,
    lasso_solve,
    reconstruct,
    squared_error,
)
from .scene import (
    Scene,
    SignatureBook,
    dct_matrix,
    generate_scene,
    generate_signatures,
    scene_from_json,
    scene_to_json,
)
from .selection import (
    AcquiredSet,
    select_corr_normalized,
    select_magnitude,
    select_oracle,
    select_random,
)

__version__ = "0.1.0"
