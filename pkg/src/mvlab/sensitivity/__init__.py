"""Flow tangents, BEL estimators, kernels and measure derivatives."""

from .backward import backward_difference_decomposition
from .bel import BelWeight, bel_gradient, bel_hessian
from .derivatives import (CapabilityError, first_order_derivative, gamma_operator, linear_duality_gradient,
                          linear_first_order, linear_first_order_grad, linear_first_order_via_p,
                          linear_flow_mean_sensitivity, linear_phi_mixture, linear_second_order,
                          second_order_derivative)
from .estimates import BBKernel, DerivativeEstimate, batch_stats, within
from .kernels import estimate_BB
from .tangent import TangentFlow, fd_gradient_check, tangent_flow, tangent_paths
