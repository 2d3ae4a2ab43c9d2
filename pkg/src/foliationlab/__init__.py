"""foliationlab: chart-local numerical laboratory for singular holomorphic
foliations at desk scale.

Two documented idealizations run through everything:

* the leafwise hyperbolic metric is the model density
  eta(z) = ||z||_1 (1 + |ln ||z||_1|) (constant c0 in regular boxes), and
* the chart-local Bowen distance drops the rotation infimum and quantifies
  over sampled flow paths, making it an upper-bound-flavored proxy.

All randomized checks are falsifiers with explicit seeds, never proofs.
"""

from .constants import SIGMA0, ConstantsBundle, desk_bundle, estimate_chart_constants
from .disk import (
    HDisk,
    HPoint,
    eradius_to_hradius,
    hdisk_cover_check,
    hradius_to_eradius,
    poincare_distance,
)
from .errors import (
    CardinalityError,
    CoverageError,
    FoliationLabError,
    IntegrationFailure,
    NewtonFailure,
    TrajectoryEscape,
)
from .models import (
    ChartPoint,
    FlowPath,
    SingularityModel,
    briot_bouquet,
    check_nondegenerate,
    eval_field,
    flow,
    flow_along_path,
    hat_field,
    linearizable,
    model_from_dict,
    model_to_dict,
    norm1,
    poincare_dulac,
    reparametrized_field,
)
from .metric import (
    bowen_cell_check,
    escape_to_fringe,
    eta_model,
    gamma_time_bound,
    gronwall_envelope,
    poincare_length,
    r_sing,
)

__version__ = "0.1.0"
