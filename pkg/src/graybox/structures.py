"""Canonical gray-box structures shipped with the package.

Each builder returns an :class:`AffineStructure` together with a reference
parameter point used by the documentation and the test harness.  The CLI
accepts the names in :data:`BUNDLED` wherever a structure file is expected.
"""

from __future__ import annotations

import numpy as np

from .model import AffineStructure, Dims

__all__ = ["scalar", "mass_spring_damper", "compartment3", "BUNDLED", "bundled_structure"]


def scalar() -> tuple[AffineStructure, np.ndarray]:
    """First-order model: A = theta_1, B = theta_2, C fixed at 0.5."""
    structure = AffineStructure(
        kappa0=np.array([0.0, 0.0, 0.5]),
        K=np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
        dims=Dims(1, 1, 1),
    )
    return structure, np.array([3.0, 2.0])


def mass_spring_damper() -> tuple[AffineStructure, np.ndarray]:
    """Unit mass with stiffness theta_1, damping theta_2 and input gain theta_3.

        A = [[0, 1], [-theta_1, -theta_2]]   B = [[0], [theta_3]]   C = [1, 0]
    """
    dims = Dims(2, 1, 1)
    kappa0 = np.zeros(dims.n_abc)
    k = np.zeros((dims.n_abc, 3))
    # vec(A) = [0, -theta_1, 1, -theta_2]
    kappa0[2] = 1.0
    k[1, 0] = -1.0
    k[3, 1] = -1.0
    # vec(B) = [0, theta_3]
    k[5, 2] = 1.0
    # vec(C) = [1, 0]
    kappa0[6] = 1.0
    return AffineStructure(kappa0=kappa0, K=k, dims=dims), np.array([4.0, 0.5, 1.0])


def compartment3() -> tuple[AffineStructure, np.ndarray]:
    """Three-compartment chain with rates theta_1..theta_3 and input gain theta_4.

        A = [[-theta_1, 0, 0], [theta_1, -theta_2, 0], [0, theta_2, -theta_3]]
        B = [[theta_4], [0], [0]]   C = [0, 0, 1]

    Material flows 1 -> 2 -> 3 and drains from compartment 3; the last
    compartment is observed.  The rates are recoverable up to swapping the
    first two (the input gain compensates), so parameter estimates should be
    judged through the similarity residuals, not entrywise.
    """
    dims = Dims(3, 1, 1)
    kappa0 = np.zeros(dims.n_abc)
    k = np.zeros((dims.n_abc, 4))
    # vec(A) = [-t1, t1, 0, 0, -t2, t2, 0, 0, -t3]
    k[0, 0] = -1.0
    k[1, 0] = 1.0
    k[4, 1] = -1.0
    k[5, 1] = 1.0
    k[8, 2] = -1.0
    # vec(B) = [t4, 0, 0]
    k[9, 3] = 1.0
    # vec(C) = [0, 0, 1]
    kappa0[14] = 1.0
    return AffineStructure(kappa0=kappa0, K=k, dims=dims), np.array([1.0, 0.7, 0.4, 2.0])


BUNDLED = {
    "scalar": scalar,
    "mass-spring": mass_spring_damper,
    "compartment3": compartment3,
}


def bundled_structure(name: str) -> tuple[AffineStructure, np.ndarray]:
    """Look up a bundled structure by name; raises ValueError for unknown names."""
    try:
        builder = BUNDLED[name]
    except KeyError:
        raise ValueError(
            f"unknown structure {name!r}; bundled names are {sorted(BUNDLED)}"
        ) from None
    return builder()
