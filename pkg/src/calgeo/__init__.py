"""calgeo: executable linear algebra of calibrated geometry.

Forms, multivectors and calibrations on R^n; comass and calibrated planes by
Riemannian optimization on Grassmannians; pointwise plurisubharmonicity
classification; convex-cone memberships with certificates; boundary
convexity and free-submanifold tests.
"""

__version__ = "0.1.0"

from .catalog import (
    AlgebraTable,
    Calibration,
    load_calibration,
    make_calibration,
    octonion_table,
    parse_builtin,
    quaternion_table,
    save_calibration,
)
from .cones import (
    ConeCertificate,
    SubspaceBasis,
    check_certificate,
    essential_subspace,
    hyperplane_boundary_test,
    lambda_span,
    normality_check,
    pluriharmonic_mod_d_test,
    positive_cone_membership,
    project_to_lambda,
)
from .convexity import (
    BoundaryReport,
    HullProblem,
    SurfaceJet,
    boundary_margin,
    dist_sq_jet,
    free_test,
    log_delta_margin,
    quad_hull_membership,
    second_fundamental,
    stabilize_defining,
    torus_scan,
)
from .exterior import (
    Form,
    Multivector,
    derivation_extend,
    hodge_star,
    interior,
    lambda_phi,
    lambda_phi_adjoint,
    pair,
    plucker,
    wedge,
)
from .grassmann import (
    CousinBasis,
    OptOptions,
    OptReport,
    OrientedPlane,
    calibrated_planes,
    comass,
    critical_planes,
    first_cousin_basis,
    form_margin,
    random_plane,
    trace_margin,
)
from .pshcheck import (
    Jet2,
    PshReport,
    QuadraticSpace,
    d_phi_point,
    ellipticity_report,
    jet_compose,
    log_sum_exp,
    nonconvex_psh_witness,
    phi_hessian_point,
    phi_laplacian,
    pluriharmonic_quadratic_space,
    psh_classify,
    quadratic_jet,
    richness_check,
)
