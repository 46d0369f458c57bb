"""Central numeric tolerance constants.

Every module reads its tolerances from the single frozen record below so the
whole workbench can be tightened or audited in one place.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    prob_sum: float = 1e-9        # softmax outputs must sum to 1 within this
    log_floor: float = 1e-12      # log arguments clamped here to stop NaN cascades
    box_slack: float = 1e-12      # allowed float slack on the L-inf attack budget
    grad_rel: float = 1e-4        # max relative error vs central finite differences
    fd_step: float = 1e-5         # default central-difference step
    orthonormal: float = 1e-8     # column orthonormality of SVD factors
    svd_recon: float = 1e-8       # relative Frobenius reconstruction error at full rank
    jacobi_threshold: float = 1e-12   # off-diagonal convergence threshold, one-sided Jacobi
    jacobi_max_sweeps: int = 100


TOL = Tolerances()
