"""Projective dynamics: rays, bivector impulsions and motion on screens."""

from .errors import (
    ConfigError,
    DomainError,
    EvaluationError,
    IncompleteError,
    InconsistentStateError,
    InvalidArgumentError,
    ProjdynError,
    SingularityError,
    StiffnessError,
    VerticalScreenError,
)
from .exterior import (
    AlternatingForm,
    HomogeneityTag,
    Multivector,
    interior_coform,
    interior_vector,
    numeric_d,
    volume_contract,
    wedge,
)
from .screens import (
    CylinderScreen,
    FlatScreen,
    GeneralQuadraticScreen,
    ProjectiveState,
    ScreenState,
    SphereScreen,
    impulsion_to_velocity,
    project_to_screen,
    reaction_lambda,
    screen_eval,
    velocity_to_impulsion,
)
from .forces import (
    CentralField,
    CustomField,
    JacobiAttractor,
    KeplerField,
    ZeroField,
    central_from_psi,
    eval_force,
    halphen_transform,
    power_law_field,
    restrict_to_screen,
    validate_field,
)
from .integrate import (
    IntegratorConfig,
    Leaf,
    Trajectory,
    detect_crossings,
    integrate,
    integrate_second_order,
    transport_to_screen,
)
from .analysis import (
    GElement,
    LeafFrame,
    LeafState,
    compare_screens,
    conic_analysis,
    constant_of_areas,
    dilation_map,
    divergence_check,
    eccentricity_covector,
    return_map,
    symmetry_check_H,
)

__version__ = "0.1.0"
