"""Joint geometric-photometric geodesic matching of textured simplicial meshes."""

from .dynamics import (
    DynamicsConfig,
    MatchProblem,
    Trajectory,
    forward_rhs,
    integrate_adjoint_backward,
    integrate_forward,
    objective_gradient,
    reduced_hamiltonian,
)
from .fem import (
    FunctionalMetric,
    assemble_h1,
    assemble_mass_lumped,
    assemble_mass_p1,
    assemble_metric,
    assemble_stiffness,
    lumped_vertex_weights,
    metric_form_grad_x,
    quadratic_form,
    solve_spd,
)
from .fshape import (
    AdjointState,
    CellGeometry,
    DiscreteFshape,
    ShootingState,
    apply_end_transform,
    cell_geometry,
    validate_fshape,
)
from .kernels import (
    GrassmannKernelSpec,
    RadialKernelSpec,
    grassmann_eval,
    grassmann_grad,
    kernel_conv,
    quad_form,
    quad_form_grad_x,
    radial_eval,
    scalar_kernel_eval,
    scalar_kernel_grad,
)
from .matching import (
    MatchConfig,
    MatchResult,
    ScaleStage,
    digits_preset,
    match,
    objective,
    shoot,
)
from .sphere import SphereState, chi, chi_prime, integrate_sphere, sphere_vertex_momenta
from .varifold import (
    DiscreteVarifold,
    VarifoldKernels,
    fidelity,
    grad_fidelity,
    to_varifold,
    varifold_inner,
)

__version__ = "0.1.0"

__all__ = [
    "AdjointState",
    "CellGeometry",
    "DiscreteFshape",
    "DiscreteVarifold",
    "DynamicsConfig",
    "FunctionalMetric",
    "GrassmannKernelSpec",
    "MatchConfig",
    "MatchProblem",
    "MatchResult",
    "RadialKernelSpec",
    "ScaleStage",
    "ShootingState",
    "SphereState",
    "Trajectory",
    "VarifoldKernels",
    "apply_end_transform",
    "assemble_h1",
    "assemble_mass_lumped",
    "assemble_mass_p1",
    "assemble_metric",
    "assemble_stiffness",
    "cell_geometry",
    "chi",
    "chi_prime",
    "digits_preset",
    "fidelity",
    "forward_rhs",
    "grad_fidelity",
    "grassmann_eval",
    "grassmann_grad",
    "integrate_adjoint_backward",
    "integrate_forward",
    "integrate_sphere",
    "kernel_conv",
    "lumped_vertex_weights",
    "match",
    "metric_form_grad_x",
    "objective",
    "objective_gradient",
    "quad_form",
    "quad_form_grad_x",
    "quadratic_form",
    "radial_eval",
    "reduced_hamiltonian",
    "scalar_kernel_eval",
    "scalar_kernel_grad",
    "shoot",
    "solve_spd",
    "sphere_vertex_momenta",
    "to_varifold",
    "validate_fshape",
    "varifold_inner",
]
