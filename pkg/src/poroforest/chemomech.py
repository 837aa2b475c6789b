"""Chemo-mechanical porosity of fully hydrated cement/fly-ash pastes.

The model turns mix proportions (cement, water, fly ash doses in kg/m3) and
oxide mass fractions into the volume fraction of empty pore space after
complete hydration and pozzolanic reaction. The chemistry has two regimes,
selected by whether the cement's SO3 content exceeds what its aluminate
phases can bind (the "high gypsum" regime) or not ("low gypsum"); each
regime has its own porosity bracket and its own saturation dose p_max —
the largest fly-ash dose that still finds calcium hydroxide to react with.
Ash beyond p_max stays inert filler, so the reacting dose is
min(P, p_max).

All oxide contents are mass fractions of the material (0..1); gamma factors
are the active (glassy) fractions of the ash's silica and alumina. Water
density is taken as 1000 kg/m3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .errors import DataError, NumericError

__all__ = [
    "RHO_WATER",
    "OxideComposition",
    "ActiveFractions",
    "CompositionSet",
    "ChemoMixInput",
    "ChemoResult",
    "HIGH_GYPSUM",
    "LOW_GYPSUM",
    "gypsum_branch",
    "p_max",
    "papadakis_porosity",
    "mix_input_from_record",
    "default_composition",
    "load_composition",
]

RHO_WATER = 1000.0  # kg/m3

HIGH_GYPSUM = "high_gypsum"
LOW_GYPSUM = "low_gypsum"

_OXIDE_KEYS = ("CaO", "SiO2", "Al2O3", "Fe2O3", "SO3")


def _check_fraction(name: str, value) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise DataError(f"{name} must be a number, got {value!r}") from None
    if not 0.0 <= value <= 1.0:
        raise DataError(f"{name} must be a mass fraction in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class OxideComposition:
    """Mass fractions of the five oxides the porosity model consumes."""

    cao: float
    sio2: float
    al2o3: float
    fe2o3: float
    so3: float

    def __post_init__(self):
        total = 0.0
        for field_name in ("cao", "sio2", "al2o3", "fe2o3", "so3"):
            total += _check_fraction(field_name, getattr(self, field_name))
        if total > 1.0 + 1e-9:
            raise DataError(f"oxide fractions sum to {total}, more than 1")


@dataclass(frozen=True)
class ActiveFractions:
    """Reactive (glassy) share of the ash's silica and alumina."""

    silica: float = 0.82
    alumina: float = 0.82

    def __post_init__(self):
        _check_fraction("silica", self.silica)
        _check_fraction("alumina", self.alumina)


@dataclass(frozen=True)
class CompositionSet:
    """Everything chemistry-side: cement oxides, ash oxides, active shares."""

    cement: OxideComposition
    fly_ash: OxideComposition
    fractions: ActiveFractions


@dataclass(frozen=True)
class ChemoMixInput:
    """Mix proportions in kg per m3 of concrete. eps_air is entrapped-air
    volume fraction added directly to the porosity."""

    cement: float
    water: float
    fly_ash: float = 0.0
    eps_air: float = 0.0

    def __post_init__(self):
        if not self.cement > 0:
            raise DataError(f"cement dose must be > 0 kg/m3, got {self.cement}")
        if not self.water > 0:
            raise DataError(f"water dose must be > 0 kg/m3, got {self.water}")
        if not self.fly_ash >= 0:
            raise DataError(f"fly-ash dose must be >= 0 kg/m3, got {self.fly_ash}")
        if not self.eps_air >= 0:
            raise DataError(f"air fraction must be >= 0, got {self.eps_air}")


@dataclass(frozen=True)
class ChemoResult:
    """branch: gypsum regime used; porosity: empty-pore volume fraction;
    p_max: saturation ash dose (0 for ash-free mixes); p_effective: the dose
    that actually reacts, min(P, p_max)."""

    branch: str
    porosity: float
    p_max: float
    p_effective: float

    def as_dict(self) -> dict:
        return {
            "branch": self.branch,
            "porosity": self.porosity,
            "porosity_pct": 100.0 * self.porosity,
            "p_max": self.p_max,
            "p_effective": self.p_effective,
        }


def gypsum_branch(mix: ChemoMixInput, comps: CompositionSet) -> str:
    """Which chemistry regime applies: high gypsum when the cement's SO3
    exceeds the binding capacity of the available aluminates (cement's plus
    the active share of the raw ash dose); ties go to low gypsum."""
    c = comps.cement
    a = comps.fly_ash
    g = comps.fractions
    threshold = (
        0.785 * c.al2o3
        - 0.501 * c.fe2o3
        + 0.785 * g.alumina * a.al2o3 * (mix.fly_ash / mix.cement)
    )
    return HIGH_GYPSUM if c.so3 > threshold else LOW_GYPSUM


def p_max(comps: CompositionSet, cement: float, branch: str) -> float:
    """Saturation fly-ash dose (kg/m3) for a given cement dose: the point
    where the pozzolanic reaction exhausts the calcium hydroxide produced by
    hydration. Undefined (NumericError) when the ash has no active silica
    or alumina."""
    if not cement > 0:
        raise DataError(f"cement dose must be > 0 kg/m3, got {cement}")
    c = comps.cement
    a = comps.fly_ash
    g = comps.fractions
    if branch == HIGH_GYPSUM:
        numerator = (
            1.321 * (c.cao - 0.7 * c.so3)
            - 1.851 * c.sio2
            - 2.182 * c.al2o3
            - 1.392 * c.fe2o3
        ) * cement
        denominator = 1.851 * g.silica * a.sio2 + 2.182 * g.alumina * a.al2o3
    elif branch == LOW_GYPSUM:
        numerator = (
            1.321 * c.cao
            - 1.851 * c.sio2
            - 2.907 * c.al2o3
            - 0.928 * c.fe2o3
        ) * cement
        denominator = 1.851 * g.silica * a.sio2 + 2.907 * g.alumina * a.al2o3
    else:
        raise ValueError(f"unknown branch {branch!r}")
    if denominator == 0.0:
        raise NumericError(
            "ash has no active silica or alumina; the saturation dose is undefined"
        )
    return numerator / denominator


def papadakis_porosity(
    mix: ChemoMixInput, comps: CompositionSet | None = None
) -> ChemoResult:
    """Empty-pore volume fraction of the fully reacted paste.

    Picks the gypsum regime from the raw ash dose, caps the reacting ash at
    p_max (ash-free mixes skip that computation entirely), and evaluates the
    regime's porosity expression. A non-positive result means the inputs
    describe an impossible mix (more solid reaction product than space)
    and raises NumericError.
    """
    if comps is None:
        comps = default_composition()
    branch = gypsum_branch(mix, comps)
    if mix.fly_ash > 0:
        saturation = p_max(comps, mix.cement, branch)
        p_eff = min(mix.fly_ash, saturation)
    else:
        saturation = 0.0
        p_eff = 0.0
    c = comps.cement
    a = comps.fly_ash
    g = comps.fractions
    if branch == HIGH_GYPSUM:
        bracket = (
            0.249 * (c.cao - 0.7 * c.so3)
            + 0.191 * c.sio2
            + 1.118 * c.al2o3
            - 0.357 * c.fe2o3
        )
        ash_coef = 1.18
    else:
        bracket = (
            0.249 * c.cao
            - 0.1 * c.so3
            + 0.191 * c.sio2
            + 1.059 * c.al2o3
            - 0.319 * c.fe2o3
        )
        ash_coef = 1.121
    porosity = (
        mix.eps_air
        + mix.water / RHO_WATER
        - bracket * mix.cement / RHO_WATER
        - ash_coef * g.alumina * a.al2o3 * p_eff / RHO_WATER
    )
    if porosity <= 0.0:
        raise NumericError(
            f"computed porosity {porosity:.6g} is not positive; the mix has "
            "more reaction product than space (check doses and air content)"
        )
    return ChemoResult(
        branch=branch, porosity=porosity, p_max=saturation, p_effective=p_eff
    )


def mix_input_from_record(record, *, eps_air: float = 0.0) -> ChemoMixInput:
    """Convert a mix record (binder dose + replacement percentages) into
    absolute doses. Slag mixes are rejected: the chemistry model only
    covers cement and fly ash."""
    if record.ggbs > 0:
        raise DataError(
            f"mix {record.mix_id!r} contains slag ({record.ggbs}% of binder); "
            "the porosity chemistry only covers cement and fly ash"
        )
    ash = record.binder * record.fly_ash / 100.0
    cement = record.binder - ash
    water = record.w_b * record.binder
    return ChemoMixInput(cement=cement, water=water, fly_ash=ash, eps_air=eps_air)


def _composition_from_payload(payload: dict, origin: str) -> CompositionSet:
    if not isinstance(payload, dict):
        raise DataError(f"{origin}: expected a JSON object at the top level")
    parts = {}
    for material in ("cement", "fly_ash"):
        entry = payload.get(material)
        if not isinstance(entry, dict):
            raise DataError(f"{origin}: missing {material!r} oxide table")
        values = {}
        for key in _OXIDE_KEYS:
            if key not in entry:
                raise DataError(f"{origin}: {material} is missing {key}")
            values[key.lower()] = entry[key]
        parts[material] = OxideComposition(
            cao=values["cao"],
            sio2=values["sio2"],
            al2o3=values["al2o3"],
            fe2o3=values["fe2o3"],
            so3=values["so3"],
        )
    fractions = ActiveFractions(
        silica=payload.get("gamma_S", 0.82),
        alumina=payload.get("gamma_A", 0.82),
    )
    return CompositionSet(
        cement=parts["cement"], fly_ash=parts["fly_ash"], fractions=fractions
    )


def load_composition(path) -> CompositionSet:
    """Read a composition file: JSON with 'cement' and 'fly_ash' oxide
    tables (keys CaO, SiO2, Al2O3, Fe2O3, SO3; mass fractions) and optional
    gamma_S / gamma_A active shares (default 0.82). Extra oxide keys are
    ignored."""
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read composition file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    return _composition_from_payload(payload, str(path))


def default_composition() -> CompositionSet:
    """Built-in ordinary portland cement and low-calcium fly ash oxides."""
    source = resources.files("poroforest.data") / "default_composition.json"
    payload = json.loads(source.read_text(encoding="utf-8"))
    return _composition_from_payload(payload, "default composition")
