"""Numerical geometry of the conifold local models.

Submodules
----------
local_models
    Charts, the blowdown, the smoothing maps and samplers.
cdlo_metrics
    Ricci-flat metrics, profiles, tensor norms, curve lengths.
discrete_geometry
    Geodesic graphs, distances, diameters, curve reduction, volumes.
gh_analysis
    Distortion of maps, GH bounds, convergence checks and audits.
experiments, cli
    Config-driven experiment harness.
"""

__version__ = "0.1.0"
