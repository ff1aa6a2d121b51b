"""Material descriptors for the fluid and porous solid phases."""

from __future__ import annotations

from dataclasses import dataclass, field, fields


class MaterialError(ValueError):
    """A material field violates its physical constraint."""


def _check(cond: bool, name: str, msg: str):
    if not cond:
        raise MaterialError(f"{name}: {msg}")


@dataclass(frozen=True)
class FluidMaterial:
    name: str
    rest_density: float  # kg/m^3
    viscosity: float = 0.0  # Pa*s, dynamic

    def __post_init__(self):
        _check(self.rest_density > 0, f"{self.name}.rest_density",
               f"must be positive, got {self.rest_density}")
        _check(self.viscosity >= 0, f"{self.name}.viscosity",
               f"must be non-negative, got {self.viscosity}")


@dataclass(frozen=True)
class PorousSolidMaterial:
    """Porous deformable solid.

    The rest density refers to the solid phase itself; the porous object's
    effective rest density is (1 - porosity) * solid_phase_rest_density.
    ``compressible_pores`` selects whether the pressure solve permits pore
    collapse (sponge) or resists any compression (wood, compact soil).
    """

    name: str
    solid_phase_rest_density: float  # kg/m^3
    porosity: float  # fraction of bulk volume that is pore space
    lame_mu: float = 0.0  # Pa
    lame_lambda: float = 0.0  # Pa
    compressible_pores: bool = False
    porous_viscosity: float = 0.0  # Pa*s, drag coefficient
    capillary_c0: float = 0.0  # N/m, adhesion strength at zero saturation
    capillary_falloff: float = 1.0  # in [0,1], potential reduction at full saturation
    bloating: float = 0.0  # Pa, isotropic stress offset per unit saturation
    mu_change: float = 0.0  # relative shear stiffness change at full saturation
    lambda_change: float = 0.0  # relative volumetric stiffness change at full saturation
    mu_floor_fraction: float = 0.001  # lower clamp for mu(S) as a fraction of lame_mu
    zero_energy_penalty: float = 0.0  # optional pairwise stabilization, off by default

    def __post_init__(self):
        n = self.name
        _check(self.solid_phase_rest_density > 0, f"{n}.solid_phase_rest_density",
               f"must be positive, got {self.solid_phase_rest_density}")
        _check(0.0 <= self.porosity < 1.0, f"{n}.porosity",
               f"must be in [0, 1), got {self.porosity}")
        _check(self.lame_mu >= 0, f"{n}.lame_mu",
               f"must be non-negative, got {self.lame_mu}")
        _check(self.lame_lambda >= 0, f"{n}.lame_lambda",
               f"must be non-negative, got {self.lame_lambda}")
        _check(0.0 <= self.capillary_falloff <= 1.0, f"{n}.capillary_falloff",
               f"must be in [0, 1], got {self.capillary_falloff}")
        _check(self.porous_viscosity >= 0, f"{n}.porous_viscosity",
               f"must be non-negative, got {self.porous_viscosity}")
        _check(self.capillary_c0 >= 0, f"{n}.capillary_c0",
               f"must be non-negative, got {self.capillary_c0}")
        _check(self.bloating >= 0, f"{n}.bloating",
               f"must be non-negative, got {self.bloating}")
        _check(self.mu_floor_fraction >= 0, f"{n}.mu_floor_fraction",
               f"must be non-negative, got {self.mu_floor_fraction}")
        _check(self.zero_energy_penalty >= 0, f"{n}.zero_energy_penalty",
               f"must be non-negative, got {self.zero_energy_penalty}")

    @property
    def bulk_rest_density(self) -> float:
        """Rest density of the porous object including its pore space."""
        return (1.0 - self.porosity) * self.solid_phase_rest_density


_NUMERIC_DEFAULTS = {
    f.name: f.default
    for f in fields(PorousSolidMaterial)
    if f.name not in ("name", "compressible_pores")
}


def fluid_material_from_dict(d: dict, where: str) -> FluidMaterial:
    return FluidMaterial(
        name=str(d.get("name", where)),
        rest_density=float(_require(d, "rest_density", where)),
        viscosity=float(d.get("viscosity", 0.0)),
    )


def solid_material_from_dict(d: dict, where: str) -> PorousSolidMaterial:
    kwargs = {
        "name": str(d.get("name", where)),
        "solid_phase_rest_density": float(_require(d, "solid_phase_rest_density", where)),
        "porosity": float(_require(d, "porosity", where)),
        "compressible_pores": bool(d.get("compressible_pores", False)),
    }
    for key, default in _NUMERIC_DEFAULTS.items():
        if key in ("solid_phase_rest_density", "porosity"):
            continue
        kwargs[key] = float(d.get(key, default))
    return PorousSolidMaterial(**kwargs)


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise MaterialError(f"{where}.{key}: required field is missing")
    return d[key]
