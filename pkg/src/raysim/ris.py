"""Discrete-cell reconfigurable reflecting panel.

The panel has an orthonormal basis (e_x, e_y, e_z): e_x and e_y span the cell
grid, e_z is the front normal. It reflects with a programmable tangential
steering target (a_x_star, a_y_star); the electromagnetic response itself is
evaluated in :mod:`raysim.em`.

Direction convention: propagation directions are world-frame unit vectors.
Inside the panel frame the *incoming* leg is used with its sign flipped (it
points from the panel back toward the source), so the tangential sums of a
specular in/out pair cancel and the steered pair maximizes the array factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as g


@dataclass(frozen=True)
class RisPanel:
    id: str
    center: np.ndarray
    e_x: np.ndarray
    e_y: np.ndarray
    q_x: int
    q_y: int
    d_x: float
    d_y: float
    l_u: float
    a_x_star: float = 0.0
    a_y_star: float = 0.0

    def __post_init__(self):
        ex = g.unit(self.e_x)
        ey = g.unit(self.e_y)
        if abs(np.dot(ex, ey)) > 1e-12:
            raise ValueError("RIS basis e_x, e_y must be orthonormal")
        if self.l_u > min(self.d_x, self.d_y) + 1e-12:
            raise ValueError("cell size l_u must not exceed the cell pitch")
        object.__setattr__(self, "e_x", ex)
        object.__setattr__(self, "e_y", ey)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def e_z(self) -> np.ndarray:
        return np.cross(self.e_x, self.e_y)

    @property
    def num_cells(self) -> int:
        return self.q_x * self.q_y

    def basis(self) -> np.ndarray:
        return np.vstack([self.e_x, self.e_y, self.e_z])

    def to_panel(self, d) -> np.ndarray:
        """World direction -> panel-frame components [e_x e_y e_z]^T d."""
        return self.basis() @ np.asarray(d, dtype=float)

    def to_world(self, d_panel) -> np.ndarray:
        return self.basis().T @ np.asarray(d_panel, dtype=float)

    def cell_positions(self) -> np.ndarray:
        """World positions of all cells, index n = ix * q_y + iy."""
        ix = np.arange(self.q_x) - (self.q_x - 1) / 2.0
        iy = np.arange(self.q_y) - (self.q_y - 1) / 2.0
        px = ix[:, None, None] * self.d_x * self.e_x
        py = iy[None, :, None] * self.d_y * self.e_y
        return (self.center + px + py).reshape(self.num_cells, 3)

    def tangential_sum(self, d_in, d_out):
        """(A_x, A_y): summed tangential components of the reversed incoming and
        the outgoing propagation directions."""
        din = self.to_panel(-np.asarray(d_in, dtype=float))
        dout = self.to_panel(np.asarray(d_out, dtype=float))
        return float(din[0] + dout[0]), float(din[1] + dout[1])

    def is_front(self, d_in) -> bool:
        """True when a wave propagating along d_in arrives on the front side."""
        return float(np.dot(d_in, self.e_z)) < 0.0


def set_steering(panel: RisPanel, d_in, d_out) -> RisPanel:
    """Return a panel steered for the (incoming, outgoing) direction pair.

    d_in is the arriving propagation direction (pointing into the panel),
    d_out the departing one. Both must lie in the front halfspace.
    """
    d_in = g.unit(d_in)
    d_out = g.unit(d_out)
    if not panel.is_front(d_in):
        raise ValueError("steering target: incoming direction is behind the panel")
    if float(np.dot(d_out, panel.e_z)) <= 0.0:
        raise ValueError("steering target: outgoing direction is behind the panel")
    ax, ay = panel.tangential_sum(d_in, d_out)
    return replace(panel, a_x_star=ax, a_y_star=ay)
