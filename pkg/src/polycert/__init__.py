"""polycert: certified polynomial networks and overflow-robust CKKS circuits.

The pipeline, end to end:

1. load a plaintext network (`network`),
2. compute sound per-neuron pre-activation ranges and fit certified
   per-neuron polynomial activations on them (`ranges`, `approx`,
   `surrogate`, `cheb`, `remez`),
3. bound the resulting output deviation (`diffbound`),
4. search sampling-designed baselines for overflow attacks (`attack`),
5. compile to an arithmetic-circuit description with CKKS parameters
   (`circuit`) and execute it on the fixed-point simulator (`sim`).
"""

__version__ = "0.1.0"

from .activations import Activation, activation_from_name  # noqa: F401
from .approx import (CertifiedActivationPoly, certify_pi_error,  # noqa: F401
                     convergence_bound, fit_activation, total_variation)
from .attack import (AttackResult, PerturbationSpec, attack_campaign,  # noqa: F401
                     check_overflow, overflow_objective, pgd_attack)
from .cheb import ChebPoly, extrema, interpolate, range_enclosure  # noqa: F401
from .circuit import (CKKSParams, CircuitDesc, compile_network,  # noqa: F401
                      parse_circuit, required_depth, select_params,
                      serialize_circuit)
from .diffbound import (DerivativeBounds, DiffState, diff_bound,  # noqa: F401
                        diff_relaxation, gelu_derivative_bounds,
                        linear_diff_step)
from .interval import Interval  # noqa: F401
from .network import (Dataset, Network, PolyNetwork, forward,  # noqa: F401
                      forward_many, grad_input, load_dataset, load_network,
                      load_polynetwork, lower_conv_to_dense, save_dataset,
                      save_network, save_polynetwork)
from .ranges import (BoundsReport, CertifyConfig, RelaxedNetwork,  # noqa: F401
                     build_polynet, certify_network, constant_ranges,
                     gelu_relaxation, sampled_ranges, verified_bounds)
from .remez import EquioscillationCertificate, remez  # noqa: F401
from .sim import (FailureValue, SimCiphertext, SimContext,  # noqa: F401
                  Simulator, run_circuit, run_many)
from .surrogate import (PiecewiseSurrogate, build_surrogate,  # noqa: F401
                        get_surrogate)
