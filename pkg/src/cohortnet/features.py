"""Feature-space layout: sensor categories, per-category widths, cohort labels.

The column order of every feature matrix in this package is fixed:
GSR, TEMP, IBI (one value per resampled tick each), then OX, BP
(systolic, diastolic), then the 11 questionnaire answers.
"""

from __future__ import annotations

from dataclasses import dataclass

CATEGORIES = ("GSR", "TEMP", "IBI", "OX", "BP", "Q")
WATCH_CATEGORIES = ("GSR", "TEMP", "IBI")
CHANNELS = ("GSR", "TEMP", "IBI", "OX", "BP_SYS", "BP_DIA")

COHORTS = ("C1", "C2", "C3")
N_COHORTS = len(COHORTS)

QUESTIONNAIRE_ITEMS = (
    "immune_compromised",
    "chronic_lung_disease",
    "shortness_of_breath",
    "cough",
    "fever",
    "muscle_pain",
    "chills",
    "headache",
    "sore_throat",
    "smell_taste_loss",
    "diarrhea",
)

_FIXED_WIDTHS = {"OX": 1, "BP": 2, "Q": len(QUESTIONNAIRE_ITEMS)}


@dataclass(frozen=True)
class FeatureSpec:
    """A subset of feature categories plus the smartwatch samples-per-window.

    Categories are normalized to the canonical order above regardless of the
    order given.  The full six-category spec at the default 60 samples per
    window is 194 columns wide.
    """

    categories: tuple[str, ...] = CATEGORIES
    samples_per_window: int = 60

    def __post_init__(self) -> None:
        cats = tuple(self.categories)
        if not cats:
            raise ValueError("feature spec needs at least one category")
        unknown = sorted(set(cats) - set(CATEGORIES))
        if unknown:
            raise ValueError(f"unknown feature categories: {unknown}")
        if len(set(cats)) != len(cats):
            raise ValueError("duplicate feature categories")
        if self.samples_per_window < 1:
            raise ValueError("samples_per_window must be positive")
        ordered = tuple(c for c in CATEGORIES if c in cats)
        object.__setattr__(self, "categories", ordered)

    @classmethod
    def full(cls, samples_per_window: int = 60) -> "FeatureSpec":
        return cls(CATEGORIES, samples_per_window)

    @classmethod
    def parse(cls, text: str, samples_per_window: int = 60) -> "FeatureSpec":
        """Parse a spec like ``"GSR,OX,BP,Q"`` (``+`` also accepted)."""
        parts = [p.strip().upper() for p in text.replace("+", ",").split(",") if p.strip()]
        return cls(tuple(parts), samples_per_window)

    def width_of(self, category: str) -> int:
        if category in WATCH_CATEGORIES:
            return self.samples_per_window
        return _FIXED_WIDTHS[category]

    @property
    def total_width(self) -> int:
        return sum(self.width_of(c) for c in self.categories)

    def slices(self) -> dict[str, slice]:
        """Column slice of each selected category within this spec's layout."""
        out: dict[str, slice] = {}
        offset = 0
        for c in self.categories:
            w = self.width_of(c)
            out[c] = slice(offset, offset + w)
            offset += w
        return out

    def column_names(self) -> list[str]:
        names: list[str] = []
        for c in self.categories:
            if c in WATCH_CATEGORIES:
                names.extend(f"{c}_{i:02d}" for i in range(self.samples_per_window))
            elif c == "OX":
                names.append("OX")
            elif c == "BP":
                names.extend(["BP_SYS", "BP_DIA"])
            else:
                names.extend(f"Q_{item}" for item in QUESTIONNAIRE_ITEMS)
        return names

    def __str__(self) -> str:
        return "+".join(self.categories)


def all_feature_subsets(samples_per_window: int = 60) -> list[FeatureSpec]:
    """Every non-empty category subset (63 for the six categories).

    Ordered by subset size, then by canonical category positions, which
    matches the grouping used in the ablation tables.
    """
    subsets: list[tuple[int, ...]] = []
    for mask in range(1, 1 << len(CATEGORIES)):
        idx = tuple(i for i in range(len(CATEGORIES)) if mask >> i & 1)
        subsets.append(idx)
    subsets.sort(key=lambda idx: (len(idx), idx))
    return [
        FeatureSpec(tuple(CATEGORIES[i] for i in idx), samples_per_window)
        for idx in subsets
    ]
