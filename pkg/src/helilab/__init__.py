"""Numerical laboratory for symmetric genus-one helicoids.

Modules: geometry (helicoid, symmetries, boundary curve, barriers), mesh
(triangle meshes and discrete differential geometry), solver (area
minimisation and Newton), jacobi (stability), assembly (reflection, tiling,
closed geodesic), verify (censuses, level sets, asymptotics) and cli.
"""
from . import assembly, errors, geometry, jacobi, mesh, solver, verify

__all__ = ["assembly", "errors", "geometry", "jacobi", "mesh", "solver", "verify"]
__version__ = "0.1.0"
