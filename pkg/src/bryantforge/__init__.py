"""Bryant-type constant mean curvature 1 surface toolkit.

Holomorphic data (g, f dz) on a punctured sphere is turned into null lifts
in SL(2, C), immersions into hyperbolic 3-space or spacelike faces in de
Sitter 3-space, dual surfaces, curvature/volume asymptotics, and exact or
sampled value-omission reports for the hyperbolic Gauss map.
"""

__version__ = "0.1.0"

from .meromorphic import (  # noqa: F401
    INF,
    EndExpansion,
    PowerRational,
    constant_map,
    end_expansion,
    identity_map,
    is_infinite,
    mobius_apply,
    mobius_value,
    polynomial_roots,
    power_with_branch,
    roots,
    schwarzian,
)
