"""Per-tree aboveground biomass from a power-law allometric model.

The model computes oven-dry biomass in kg from trunk diameter at breast
height (cm), total height (m) and wood specific density (g/cm^3):

    agb = coefficient * (rho * dbh^2 * height) ** exponent

The default coefficients are the pantropical values widely used for
temperate forest work as well. Wood densities for the two built-in
species classes are 0.65 (birch) and 0.55 (broadleaf); other values can
be supplied with the ``custom:<rho>`` species syntax.
"""

import math
from dataclasses import dataclass

from .errors import InvalidTreeError
from .validation import check_positive

__all__ = [
    "AllometricModel",
    "DEFAULT_ALLOMETRY",
    "WOOD_DENSITY",
    "density_for_species",
    "tree_agb",
]

# Species class -> wood specific density in g/cm^3.
WOOD_DENSITY = {
    "birch": 0.65,
    "broadleaf": 0.55,
}

_RHO_MAX = 2.0  # densest known woods are ~1.3; anything above 2 is a data error


@dataclass(frozen=True)
class AllometricModel:
    """Coefficients of the biomass power law; both must be positive."""

    coefficient: float = 0.0673
    exponent: float = 0.967

    def __post_init__(self):
        if not (self.coefficient > 0 and math.isfinite(self.coefficient)):
            raise ValueError(f"coefficient must be > 0; got {self.coefficient!r}")
        if not (self.exponent > 0 and math.isfinite(self.exponent)):
            raise ValueError(f"exponent must be > 0; got {self.exponent!r}")


DEFAULT_ALLOMETRY = AllometricModel()


def check_wood_density(rho, tree_id=None):
    """Validate a wood specific density in g/cm^3 (0 < rho < 2)."""
    rho = check_positive(rho, "wood_density", tree_id=tree_id)
    if rho >= _RHO_MAX:
        raise InvalidTreeError("wood_density", rho, tree_id=tree_id)
    return rho


def density_for_species(species):
    """Map a species class name to its wood density.

    Accepts ``"birch"``, ``"broadleaf"`` or ``"custom:<rho>"`` (e.g.
    ``"custom:0.70"``). Matching is case-insensitive.
    """
    name = str(species).strip().lower()
    if name in WOOD_DENSITY:
        return WOOD_DENSITY[name]
    if name.startswith("custom:"):
        try:
            rho = float(name.split(":", 1)[1])
        except ValueError:
            raise InvalidTreeError("species", species) from None
        return check_wood_density(rho)
    raise InvalidTreeError("species", species)


def tree_agb(dbh_cm, height_m, rho, model=DEFAULT_ALLOMETRY):
    """Oven-dry aboveground biomass of one tree, in kg.

    Args:
        dbh_cm: trunk diameter at breast height, cm (> 0)
        height_m: total tree height, m (> 0)
        rho: wood specific density, g/cm^3 (0 < rho < 2)
        model: allometric coefficients; defaults to the standard values

    Strictly increasing in each argument. All arithmetic is float64;
    rounding happens only at serialization time.
    """
    dbh_cm = check_positive(dbh_cm, "dbh_cm")
    height_m = check_positive(height_m, "height_m")
    rho = check_wood_density(rho)
    return model.coefficient * (rho * dbh_cm * dbh_cm * height_m) ** model.exponent
