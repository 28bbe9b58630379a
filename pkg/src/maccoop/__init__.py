"""Stability of transmitter cooperation on Gaussian multiple access channels.

The package computes equilibrium rates for every arrangement of
cooperating transmitter coalitions under single-user-decoding and
successive-cancellation receivers, and decides whether full cooperation
is stable by testing nonemptiness of the induced partition-form cores
via linear programming.
"""

from ._kernels import BACKEND
from .analysis import (
    BoundaryPoint,
    ExternalityVerdict,
    RatioCurve,
    SuperadditivityReport,
    SweepSpec,
    approx_ratio,
    classify_externalities,
    snr_boundary,
    snr_db_to_noise,
    symmetric_scenario,
    verify_superadditivity,
)
from .capacity import (
    CovarianceProfile,
    interference_free_rate,
    logdet_rate,
    low_snr_utility,
    maximize_per_antenna,
    single_antenna_utilities,
    timeshare_highsnr_utility,
    validate_profile,
    waterfill,
)
from .cores import (
    BalancedCertificate,
    CoreResult,
    ExpectationModel,
    LeastCoreResult,
    balancedness_certificate,
    check_core,
    coalition_demand,
    core_region_3user,
    demand_vector,
    grand_value,
    least_core,
)
from .equilibrium import (
    DscReport,
    UtilityTable,
    dsc_diagnostic,
    ne_sic,
    ne_sud,
    ne_timeshare,
    ne_utilities,
    utility_table,
)
from .errors import (
    InvalidArgument,
    InvalidCovariance,
    MacCoopError,
    NonConvergence,
    NumericalFailure,
    ScenarioFormatError,
)
from .io import (
    fingerprint,
    load_scenario,
    parse_scenario,
    save_scenario,
    serialize_scenario,
)
from .model import (
    BELL_NUMBERS,
    Coalition,
    Partition,
    PerAntenna,
    Scenario,
    SicFixed,
    SicTimeShare,
    Sud,
    SumPower,
    UserSpec,
    bell_number,
    coalition_channel,
    enumerate_partitions,
    induced_order,
)

__version__ = "0.1.0"
