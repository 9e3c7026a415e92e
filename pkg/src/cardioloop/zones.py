"""Age-based heart-rate zone model.

HR_max is estimated from age (Tanaka 208 - 0.7*age by default, Fox 220 - age
as the alternative) and partitioned into the conventional five training zones
at 50/60/70/80/90/100% of HR_max. Zones are half-open [lower, upper) with the
lower edge inclusive, so every positive heart rate maps to exactly one zone id
(0 = below zone 1, 1..5 = the five zones). All arithmetic stays in floats;
rounding is a display concern only.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError

AGE_MIN = 10
AGE_MAX = 100

ZONE_FRACTIONS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

ZONE_LABELS = {
    1: "very light",
    2: "light",
    3: "moderate",
    4: "hard",
    5: "maximum",
}


def tanaka_hr_max(age: float) -> float:
    return 208.0 - 0.7 * age


def fox_hr_max(age: float) -> float:
    return 220.0 - age


HR_MAX_FORMULAS = {
    "tanaka": tanaka_hr_max,
    "fox": fox_hr_max,
}


@dataclass(frozen=True)
class AthleteProfile:
    """Who we compute zones for: age plus the HR_max formula to apply."""

    age: int
    hr_max_formula: str = "tanaka"
    hr_rest_bpm: float | None = None

    def __post_init__(self):
        if not isinstance(self.age, int) or isinstance(self.age, bool):
            raise ParameterError(f"age must be an integer, got {self.age!r}")
        if not AGE_MIN <= self.age <= AGE_MAX:
            raise ParameterError(
                f"age {self.age} outside supported range [{AGE_MIN}, {AGE_MAX}]"
            )
        if self.hr_max_formula not in HR_MAX_FORMULAS:
            raise ParameterError(
                f"unknown HR_max formula {self.hr_max_formula!r}; "
                f"expected one of {sorted(HR_MAX_FORMULAS)}"
            )
        if self.hr_rest_bpm is not None:
            hr_max = HR_MAX_FORMULAS[self.hr_max_formula](self.age)
            if not self.hr_rest_bpm < hr_max:
                raise ParameterError(
                    f"resting HR {self.hr_rest_bpm} must be below HR_max {hr_max}"
                )


@dataclass(frozen=True)
class ZoneModel:
    """Per-athlete HR_max and the six ascending zone boundaries (bpm)."""

    hr_max_bpm: float
    boundaries: tuple[float, float, float, float, float, float]

    def __post_init__(self):
        if len(self.boundaries) != 6:
            raise ParameterError("zone model needs exactly six boundaries")
        if any(nxt <= cur for cur, nxt in zip(self.boundaries, self.boundaries[1:])):
            raise ParameterError("zone boundaries must be strictly ascending")

    def zone_bounds(self, zone: int) -> tuple[float, float]:
        """[lower, upper) bounds in bpm for zone 1..5."""
        if not 1 <= zone <= 5:
            raise ParameterError(f"zone must be 1..5, got {zone}")
        return self.boundaries[zone - 1], self.boundaries[zone]

    def zone_center(self, zone: int) -> float:
        lo, hi = self.zone_bounds(zone)
        return (lo + hi) / 2.0


def compute_zone_model(profile: AthleteProfile) -> ZoneModel:
    """Build the five-zone partition for an athlete."""
    hr_max = HR_MAX_FORMULAS[profile.hr_max_formula](profile.age)
    boundaries = tuple(hr_max * f for f in ZONE_FRACTIONS)
    return ZoneModel(hr_max_bpm=hr_max, boundaries=boundaries)


def classify(hr_bpm: float, model: ZoneModel) -> int:
    """Zone id 0..5 for a heart rate; lower boundary inclusive."""
    if not hr_bpm > 0:
        raise ParameterError(f"hr_bpm must be positive, got {hr_bpm}")
    b = model.boundaries
    if hr_bpm < b[0]:
        return 0
    for zone in range(1, 6):
        if hr_bpm < b[zone]:
            return zone
    return 5
