"""viscofit: composition-aware discovery of convex hyperelastic potentials
with quasi-linear viscoelastic relaxation, fitted to tension and torsion
response curves."""

from ._kernels import backend_name
from .kinematics import (
    IsochoricInvariants,
    TensionState,
    TorsionGeometry,
    isochoric_invariant_derivatives,
    push_forward,
    second_pk_deviatoric,
    tension_cauchy_green,
    tension_invariants,
    torsion_invariants,
)
from .loading import (
    LoadingProtocol,
    MooneyRivlin,
    NeoHookean,
    PicnnMaterial,
    ResponseCurve,
    simulate_tension,
    simulate_torsion,
    tension_stress_instantaneous,
    torsion_shear_stress,
    torsion_torque_instantaneous,
)
from .metrics import MetricReport, r_squared, smape
from .potential import (
    EnergyEval,
    GatedMatrix,
    L0Hyper,
    PicnnModel,
    count_active_parameters,
    energy_gradients,
    expected_l0_penalty,
    forward_energy,
    inference_gates,
    normalized_energy,
    open_gates,
    project_nonnegative,
    sample_gate_noise,
    sample_gates,
)
from .reference import (
    COMPOSITIONS,
    ReferenceMaterial,
    gamma_reference,
    psi_reference,
    reference_picnn,
    reference_qlv,
    synthesize_dataset,
)
from .training import (
    AdamState,
    LossWeights,
    TrainingSchedule,
    adam_step,
    loss_multi,
    run_schedule,
    split_train_validation,
)
from .viscoelastic import (
    GammaMlp,
    QlvKernel,
    QlvModel,
    StressHistory,
    gamma_of_composition,
    qlv_convolve,
    qlv_convolve_brute,
)

__version__ = "0.1.0"
