"""Scattering on conic boundaries: partial-wave modes and S-matrix, free
kernels, Legendrian certification and identity checks."""

from ._conicscat import (
    ConvergenceError,
    DomainError,
    Potential,
    certify,
    config_hash,
    config_violations,
    free_resolvent_kernel,
    free_scattering_eigenvalue,
    geodesic,
    inverse_square_phase_shift,
    jump_identity_mode,
    kernel_fits,
    kernel_jump_check,
    legendrian_kinds,
    run,
    scattering_eigenvalue,
    smatrix,
    solve_mode,
    sp_kernel,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainError",
    "Potential",
    "certify",
    "config_hash",
    "config_violations",
    "free_resolvent_kernel",
    "free_scattering_eigenvalue",
    "geodesic",
    "inverse_square_phase_shift",
    "jump_identity_mode",
    "kernel_fits",
    "kernel_jump_check",
    "legendrian_kinds",
    "run",
    "scattering_eigenvalue",
    "smatrix",
    "solve_mode",
    "sp_kernel",
    "verify",
]
