"""Planar electrode layouts: axis-aligned rectangular patches in the z=0 plane.

A layout is a set of rectangles, each tagged with an electrode group and a
role (dc or rf).  Layouts are immutable after construction and validated
eagerly, so downstream field evaluation never has to re-check geometry.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass

LAYOUT_HEADER = "# trap-layout v1"

_DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

#: Names resolvable by :func:`load_layout` without a path, e.g. on the CLI.
BUNDLED_LAYOUTS = {
    "lincoln_trap_approx": os.path.join(_DATA_DIR, "lincoln_trap_approx.layout"),
    "asymmetric_microtrap": os.path.join(_DATA_DIR, "asymmetric_microtrap.layout"),
}


class LayoutError(ValueError):
    """A layout file is malformed or violates a geometric invariant."""


@dataclass(frozen=True)
class Electrode:
    """One rectangular electrode patch, edges in meters."""

    id: str
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    group: str
    role: str = "dc"

    def __post_init__(self):
        if self.role not in ("dc", "rf"):
            raise LayoutError(f"electrode {self.id!r}: role must be 'dc' or 'rf'")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise LayoutError(f"electrode {self.id!r}: degenerate rectangle")
        if not self.id:
            raise LayoutError("electrode id must be non-empty")

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)

    def overlaps(self, other: "Electrode") -> bool:
        """True if the two rectangles share positive area (touching is fine)."""
        ox = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        oy = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        return ox > 0 and oy > 0


@dataclass(frozen=True)
class ElectrodeLayout:
    """A validated collection of electrodes plus a nominal ion height.

    Invariants enforced at construction: unique ids, no positive-area
    overlap, and exactly one group tagged as the RF electrode (all of whose
    members carry the rf role).
    """

    electrodes: tuple[Electrode, ...]
    ion_height_hint: float

    def __post_init__(self):
        object.__setattr__(self, "electrodes", tuple(self.electrodes))
        if not self.electrodes:
            raise LayoutError("layout contains no electrodes")
        if self.ion_height_hint <= 0:
            raise LayoutError("ion_height_hint must be positive")
        ids = [e.id for e in self.electrodes]
        if len(set(ids)) != len(ids):
            raise LayoutError("duplicate electrode ids")
        n = len(self.electrodes)
        for i in range(n):
            for j in range(i + 1, n):
                if self.electrodes[i].overlaps(self.electrodes[j]):
                    raise LayoutError(
                        f"electrodes {ids[i]!r} and {ids[j]!r} overlap"
                    )
        rf_groups = {e.group for e in self.electrodes if e.role == "rf"}
        if len(rf_groups) != 1:
            raise LayoutError(
                f"exactly one RF group required, found {sorted(rf_groups)}"
            )
        rf_group = rf_groups.pop()
        for e in self.electrodes:
            if e.group == rf_group and e.role != "rf":
                raise LayoutError(
                    f"group {rf_group!r} mixes rf and dc roles"
                )

    @property
    def rf_group(self) -> str:
        for e in self.electrodes:
            if e.role == "rf":
                return e.group
        raise AssertionError("validated layout has an RF group")

    def groups(self) -> list[str]:
        seen: list[str] = []
        for e in self.electrodes:
            if e.group not in seen:
                seen.append(e.group)
        return seen

    def dc_groups(self) -> list[str]:
        return [g for g in self.groups() if g != self.rf_group]

    def group_electrodes(self, group: str) -> list[Electrode]:
        members = [e for e in self.electrodes if e.group == group]
        if not members:
            raise KeyError(f"no electrode group {group!r}")
        return members


def dumps_layout(layout: ElectrodeLayout) -> str:
    """Serialize a layout in the versioned sectioned key-value format."""
    buf = io.StringIO()
    buf.write(LAYOUT_HEADER + "\n\n")
    buf.write("[layout]\n")
    buf.write(f"ion_height_hint = {layout.ion_height_hint!r}\n\n")
    for e in layout.electrodes:
        buf.write(f"[electrode:{e.id}]\n")
        buf.write(f"group = {e.group}\n")
        buf.write(f"role = {e.role}\n")
        buf.write(f"x_min = {e.x_min!r}\n")
        buf.write(f"x_max = {e.x_max!r}\n")
        buf.write(f"y_min = {e.y_min!r}\n")
        buf.write(f"y_max = {e.y_max!r}\n\n")
    return buf.getvalue()


def save_layout(layout: ElectrodeLayout, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_layout(layout))


def loads_layout(text: str) -> ElectrodeLayout:
    lines = text.splitlines()
    stripped = [ln for ln in lines if ln.strip()]
    if not stripped or stripped[0].strip() != LAYOUT_HEADER:
        raise LayoutError(f"missing header line {LAYOUT_HEADER!r}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise LayoutError(f"layout parse error: {err}") from err
    if "layout" not in parser:
        raise LayoutError("missing [layout] section")
    try:
        hint = float(parser["layout"]["ion_height_hint"])
    except (KeyError, ValueError) as err:
        raise LayoutError(f"bad [layout] section: {err}") from err
    electrodes = []
    for section in parser.sections():
        if not section.startswith("electrode:"):
            continue
        sec = parser[section]
        eid = section.split(":", 1)[1]
        try:
            electrodes.append(
                Electrode(
                    id=eid,
                    group=sec["group"],
                    role=sec.get("role", "dc"),
                    x_min=float(sec["x_min"]),
                    x_max=float(sec["x_max"]),
                    y_min=float(sec["y_min"]),
                    y_max=float(sec["y_max"]),
                )
            )
        except (KeyError, ValueError) as err:
            raise LayoutError(f"bad section [{section}]: {err}") from err
    return ElectrodeLayout(electrodes=tuple(electrodes), ion_height_hint=hint)


def load_layout(path: str) -> ElectrodeLayout:
    """Load and validate a layout file (or a bundled layout name)."""
    resolved = BUNDLED_LAYOUTS.get(path, path)
    try:
        with open(resolved) as fh:
            text = fh.read()
    except OSError as err:
        raise LayoutError(f"cannot read layout {path!r}: {err}") from err
    return loads_layout(text)
