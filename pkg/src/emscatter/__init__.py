"""Classical scattering of a charged particle in a static electromagnetic field.

Simulation, high-energy asymptotic functionals, contraction bounds and
X-ray-transform reconstruction of (grad V, B) from scattering data.
"""

from __future__ import annotations

from .fields import Field, build_field, eval_field, field_a, force
from .dynamics import Controls, integrate_trajectory, scattering_datum
from .asymptotics import Line, asymptotic_terms, born_leading, finite_energy_terms, symmetrize
from .picard import check_theorem_estimates, decompose_klh, solve_fixed_point
from .bounds import bounds, thresholds
from .config import RunConfig

__version__ = "0.1.0"
