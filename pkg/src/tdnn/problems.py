"""Diffusivity tensors, forcing and boundary data of the test problems.

Tensor fields are vectorised: they accept coordinate arrays of any
broadcastable shape and return arrays of shape ``shape + (2, 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SingularDiffusivityError
from .mesh import EXTERIOR, HOLE

DET_TOL = 1e-14

# closed support of the box source, (xmin, xmax, ymin, ymax)
SOURCE_BOX = (3 / 8, 5 / 8, 3 / 8, 5 / 8)


def _tensor(d11, d12, d22):
    d11, d12, d22 = np.broadcast_arrays(d11, d12, d22)
    return np.stack([np.stack([d11, d12], -1), np.stack([d12, d22], -1)], -2)


def diffusivity_p1(x, y, eps=0.05):
    """Heterogeneous anisotropic tensor [[y^2 + eps x^2, -(1-eps) x y], [., eps y^2 + x^2]]."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d11 = y * y + eps * x * x
    d12 = -(1.0 - eps) * x * y
    d22 = eps * y * y + x * x
    det = d11 * d22 - d12 * d12
    if np.any(det < DET_TOL):
        raise SingularDiffusivityError(
            f"det D = {np.min(det):.3g} < {DET_TOL} (evaluation point at or near the origin)"
        )
    return _tensor(d11, d12, d22)


def diffusivity_p2(beta=(1.0, 1.0), a_L=0.1, a_T=0.01):
    """Dispersion tensor a_T |b| I + (a_L - a_T) / |b| b (x) b for a velocity b."""
    beta = np.asarray(beta, dtype=float)
    nb = float(np.linalg.norm(beta))
    if nb == 0.0:
        raise ValueError("beta must be non-zero")
    if not a_L >= a_T > 0:
        raise ValueError("need a_L >= a_T > 0")
    return a_T * nb * np.eye(2) + (a_L - a_T) / nb * np.outer(beta, beta)


def diffusivity_p2_raw(beta=(1.0, 1.0), a_L=0.1, a_T=0.01):
    """a_T I + (a_L - a_T) b (x) b with b not normalised.

    Same eigenvectors as :func:`diffusivity_p2` but eigenvalues
    a_L |b|^2 + a_T (1 - |b|^2) along b and a_T across it.  This is the
    tensor that reproduces the reference problem-2 tables.
    """
    beta = np.asarray(beta, dtype=float)
    if not np.any(beta):
        raise ValueError("beta must be non-zero")
    if not a_L >= a_T > 0:
        raise ValueError("need a_L >= a_T > 0")
    return a_T * np.eye(2) + (a_L - a_T) * np.outer(beta, beta)


def diffusivity_p3(k1=1.0, k2=100.0, theta=np.pi / 6):
    """Rotated orthotropic tensor R diag(k1, k2) R^T, R = [[c, s], [-s, c]]."""
    if k1 <= 0 or k2 <= 0:
        raise ValueError("k1 and k2 must be positive")
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, s], [-s, c]])
    D = rot @ np.diag([k1, k2]) @ rot.T
    return 0.5 * (D + D.T)


def forcing_box(x, y):
    """Indicator of the closed square [3/8, 5/8]^2."""
    x0, x1, y0, y1 = SOURCE_BOX
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return ((x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)).astype(float)


def constant_field(tensor):
    tensor = np.asarray(tensor, dtype=float)

    def field_(x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return np.broadcast_to(tensor, shape + (2, 2)).copy()

    field_.constant = tensor
    return field_


def zero_forcing(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


@dataclass(frozen=True)
class ProblemSpec:
    """Data of one Dirichlet problem -div(D grad c) = f, c = c^p on the boundary.

    ``source_box = (xmin, xmax, ymin, ymax, value)`` lets assemblers
    integrate a box-indicator forcing exactly; it must describe the same
    function as ``forcing`` when given.
    """

    diffusivity: Callable
    forcing: Callable
    dirichlet_values: dict
    domain: str = "unit-square"
    params: dict = field(default_factory=dict)
    source_box: tuple | None = None
    name: str = ""

    def dirichlet(self, tag, x, y):
        try:
            value = self.dirichlet_values[tag]
        except KeyError:
            raise KeyError(f"no Dirichlet data for boundary tag {tag!r}") from None
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if callable(value):
            return np.asarray(value(x, y), dtype=float)
        return np.full(np.broadcast(x, y).shape, float(value))

    @property
    def tags(self):
        return set(self.dirichlet_values)

    def scaled(self, s):
        """Same problem with D and f multiplied by ``s``."""
        diff, forc = self.diffusivity, self.forcing
        box = None
        if self.source_box is not None:
            box = (*self.source_box[:4], s * self.source_box[4])
        return ProblemSpec(
            diffusivity=lambda x, y: s * diff(x, y),
            forcing=lambda x, y: s * forcing_value(forc, x, y),
            dirichlet_values=self.dirichlet_values,
            domain=self.domain,
            params={**self.params, "scale": s},
            source_box=box,
            name=self.name,
        )


def forcing_value(f, x, y):
    return np.asarray(f(x, y), dtype=float)


P2_FORMS = ("raw", "normalized")


def builtin_problem(pid, p2_form="raw"):
    """Problems 1-3 with their published parameters.

    ``p2_form`` picks the problem-2 tensor: ``"raw"`` (default,
    :func:`diffusivity_p2_raw`) or ``"normalized"`` (:func:`diffusivity_p2`).
    """
    if p2_form not in P2_FORMS:
        raise ValueError(f"p2_form must be one of {P2_FORMS}")
    if pid == 1:
        eps = 0.05
        return ProblemSpec(
            diffusivity=lambda x, y: diffusivity_p1(x, y, eps),
            forcing=forcing_box,
            dirichlet_values={EXTERIOR: 0.0},
            params={"eps": eps},
            source_box=(*SOURCE_BOX, 1.0),
            name="problem-1",
        )
    if pid == 2:
        params = {"a_L": 0.1, "a_T": 0.01, "beta": (1.0, 1.0)}
        tensor = (diffusivity_p2_raw if p2_form == "raw" else diffusivity_p2)(**params)
        return ProblemSpec(
            diffusivity=constant_field(tensor),
            forcing=forcing_box,
            dirichlet_values={EXTERIOR: 0.0},
            params={**params, "form": p2_form},
            source_box=(*SOURCE_BOX, 1.0),
            name="problem-2",
        )
    if pid == 3:
        params = {"k1": 1.0, "k2": 100.0, "theta": np.pi / 6}
        return ProblemSpec(
            diffusivity=constant_field(diffusivity_p3(**params)),
            forcing=zero_forcing,
            dirichlet_values={EXTERIOR: 0.0, HOLE: 2.0},
            domain="unit-square-with-hole",
            params=params,
            name="problem-3",
        )
    raise ValueError(f"unknown problem id {pid!r}; expected 1, 2 or 3")
