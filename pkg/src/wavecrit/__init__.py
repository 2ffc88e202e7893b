"""Near-critical internal-wave reflection toolbox.

Asymptotic construction (incident packet + viscous boundary layers + weakly
nonlinear correctors) for internal gravity waves reflecting off a slope,
plus a reference 2D Boussinesq solver used to validate the construction
through energy and stability estimates.
"""

__version__ = "0.1.0"
