"""Closed-form electrostatics for rectangular patches in a grounded plane.

The gapless-plane approximation: the z=0 plane is fully conducting, one
rectangle is held at 1 V and the rest of the plane grounded.  The potential
above the plane is the rectangle's solid angle over 2*pi,

    phi(x,y,z) = (1/2pi) * sum_ij s_ij * atan( u_i v_j / (z R_ij) )

with u_i = x_i - x, v_j = y_j - y, R_ij = sqrt(u_i^2 + v_j^2 + z^2) and the
corner sign s_ij = +1 for (1,1),(2,2) and -1 otherwise.  The electric field
is the (closed-form) negative gradient.  Superposition over group members
gives the basis solution of an electrode group; real trap potentials are
then linear combinations weighted by electrode voltages.
"""

from __future__ import annotations

import numpy as np

from .geometry import ElectrodeLayout

#: Distinguished "no coupling" value for characteristic distances.
NO_COUPLING = float("inf")

_AXIS_VECTORS = {
    "x": np.array([1.0, 0.0, 0.0]),
    "y": np.array([0.0, 1.0, 0.0]),
    "z": np.array([0.0, 0.0, 1.0]),
}

_CORNER_SIGN = np.array([[1.0, -1.0], [-1.0, 1.0]])


def _corner_geometry(extent, points):
    x1, x2, y1, y2 = extent
    p = np.asarray(points, dtype=float)
    px, py, pz = p[..., 0], p[..., 1], p[..., 2]
    u = np.stack([x1 - px, x2 - px], axis=-1)[..., :, None]   # (...,2,1)
    v = np.stack([y1 - py, y2 - py], axis=-1)[..., None, :]   # (...,1,2)
    z = pz[..., None, None]
    r = np.sqrt(u * u + v * v + z * z)
    return u, v, z, r


def rectangle_potential(extent, points):
    """Potential (per volt, dimensionless) of one unit-voltage rectangle.

    ``points`` has shape (..., 3) with z > 0; returns shape (...).
    """
    u, v, z, r = _corner_geometry(extent, points)
    terms = np.arctan2(u * v, z * r)
    return np.sum(_CORNER_SIGN * terms, axis=(-2, -1)) / (2.0 * np.pi)


def rectangle_field(extent, points):
    """Electric field (V/m per volt) of one unit-voltage rectangle, shape (...,3)."""
    u, v, z, r = _corner_geometry(extent, points)
    uz = u * u + z * z
    vz = v * v + z * z
    # closed-form gradient of the solid-angle potential; E = -grad(phi)
    dphi_dx = np.sum(_CORNER_SIGN * (-z * v) / (uz * r), axis=(-2, -1))
    dphi_dy = np.sum(_CORNER_SIGN * (-z * u) / (vz * r), axis=(-2, -1))
    dphi_dz = np.sum(
        _CORNER_SIGN * (-u * v) * (r * r + z * z) / (uz * vz * r),
        axis=(-2, -1),
    )
    return np.stack([dphi_dx, dphi_dy, dphi_dz], axis=-1) / (-2.0 * np.pi)


def _check_points(points):
    p = np.asarray(points, dtype=float)
    if p.shape[-1] != 3:
        raise ValueError("points must have shape (..., 3)")
    if np.any(p[..., 2] <= 0):
        raise ValueError("evaluation points must have z > 0 (above the plane)")
    return p


def _group_extents(layout: ElectrodeLayout, group: str):
    return [e.extent for e in layout.group_electrodes(group)]


def basis_potential(layout: ElectrodeLayout, group: str, points):
    """Unit-voltage potential of an electrode group at ``points`` (..., 3)."""
    p = _check_points(points)
    total = np.zeros(p.shape[:-1])
    for extent in _group_extents(layout, group):
        total = total + rectangle_potential(extent, p)
    return total


def basis_field(layout: ElectrodeLayout, group: str, points):
    """Unit-voltage electric field of an electrode group, shape (..., 3)."""
    p = _check_points(points)
    total = np.zeros(p.shape)
    for extent in _group_extents(layout, group):
        total = total + rectangle_field(extent, p)
    return total


def basis_solution(layout: ElectrodeLayout, group: str, point):
    """(potential per volt, field per volt) of one group at a single point."""
    p = _check_points(point)
    return float(basis_potential(layout, group, p)), basis_field(layout, group, p)


def solve_potential(layout: ElectrodeLayout, voltages: dict, points):
    """Potential (V) for per-group voltages, by superposition."""
    p = _check_points(points)
    total = np.zeros(p.shape[:-1])
    for group, volt in voltages.items():
        if volt != 0.0:
            total = total + volt * basis_potential(layout, group, p)
    return total


def solve_field(layout: ElectrodeLayout, voltages: dict, points):
    """Electric field (V/m) for per-group voltages, by superposition."""
    p = _check_points(points)
    total = np.zeros(p.shape)
    for group, volt in voltages.items():
        if volt != 0.0:
            total = total + volt * basis_field(layout, group, p)
    return total


def _axis_vector(axis):
    if isinstance(axis, str):
        try:
            return _AXIS_VECTORS[axis]
        except KeyError:
            raise ValueError(f"unknown axis label {axis!r}") from None
    vec = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("axis vector must be nonzero")
    return vec / norm


def distance_from_field(field_component_per_volt: float) -> float:
    """Characteristic distance D = V/E for a field component per unit voltage.

    Zero field means no coupling; that is a value (:data:`NO_COUPLING`),
    not an error, because symmetric electrodes legitimately produce it.
    """
    e = abs(float(field_component_per_volt))
    if e == 0.0:
        return NO_COUPLING
    return 1.0 / e


def characteristic_distance(layout: ElectrodeLayout, group: str, axis, point) -> float:
    """D_{i,j}: voltage on group j divided by the field along axis i it makes.

    ``axis`` is 'x'/'y'/'z' or an arbitrary direction vector.  The sign of
    the field component is dropped; the magnitude is returned in meters.
    """
    vec = _axis_vector(axis)
    field = basis_field(layout, group, np.asarray(point, dtype=float))
    return distance_from_field(float(np.dot(field, vec)))
