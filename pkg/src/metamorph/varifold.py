"""Kernel varifold fidelity between textured meshes.

A mesh is summarized by one weighted Dirac per cell carrying (barycenter,
unit frame, d-volume, mean signal). The fidelity is the squared kernel-metric
distance between the two Dirac sums, with positive kernels on positions,
signal values and frames; gradients are chained back to vertex positions and
vertex signals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fshape import DiscreteFshape, cell_geometry, cell_volume_gradients, _frozen
from .kernels import (
    GrassmannKernelSpec,
    RadialKernelSpec,
    grassmann_grad_sum,
    grassmann_matrix,
    radial_deriv,
    radial_eval,
)


@dataclass(frozen=True)
class VarifoldKernels:
    """Kernel triple (position, signal, frame) defining the fidelity."""

    kp: RadialKernelSpec
    kf: RadialKernelSpec
    kt: GrassmannKernelSpec

    def rescaled(self, scale_p: float, scale_f: float) -> "VarifoldKernels":
        """Coarse-to-fine helper: scale position/signal kernel widths."""
        return VarifoldKernels(
            self.kp.rescaled(scale_p), self.kf.rescaled(scale_f), self.kt
        )


@dataclass(frozen=True)
class DiscreteVarifold:
    """Weighted Dirac sum over position x signal x frame space."""

    centers: np.ndarray
    frames: np.ndarray
    weights: np.ndarray
    cell_signals: np.ndarray

    def __post_init__(self):
        c = _frozen(self.centers)
        u = _frozen(self.frames)
        w = _frozen(self.weights)
        s = _frozen(self.cell_signals)
        if c.ndim != 2 or u.shape != c.shape:
            raise ValueError("centers and frames must be T x n matrices")
        if w.shape != (c.shape[0],) or s.shape != (c.shape[0],):
            raise ValueError("weights and cell_signals must be length-T vectors")
        if np.any(w <= 0):
            raise ValueError("varifold weights must be strictly positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "frames", u)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "cell_signals", s)


def to_varifold(fs: DiscreteFshape) -> DiscreteVarifold:
    """One Dirac per cell: barycenter, unit frame, d-volume weight, mean signal."""
    geom = cell_geometry(fs)
    return DiscreteVarifold(
        centers=geom.centers,
        frames=geom.frames,
        weights=geom.volumes,
        cell_signals=geom.cell_signals,
    )


def _kernel_matrices(a: DiscreteVarifold, b: DiscreteVarifold, K: VarifoldKernels):
    diff = a.centers[:, None, :] - b.centers[None, :, :]
    u2 = np.einsum("ijk,ijk->ij", diff, diff)
    kp = radial_eval(K.kp, u2)
    sdiff = a.cell_signals[:, None] - b.cell_signals[None, :]
    kf = radial_eval(K.kf, sdiff**2)
    kt = grassmann_matrix(K.kt, a.frames, b.frames)
    return diff, u2, kp, sdiff, kf, kt


def varifold_inner(
    a: DiscreteVarifold, b: DiscreteVarifold, K: VarifoldKernels
) -> float:
    """Kernel inner product of two discrete varifolds."""
    if a.centers.shape[1] != b.centers.shape[1]:
        raise ValueError("varifolds live in different ambient dimensions")
    _, _, kp, _, kf, kt = _kernel_matrices(a, b, K)
    return float(a.weights @ (kp * kf * kt) @ b.weights)


def _inner_first_partials(
    a: DiscreteVarifold, b: DiscreteVarifold, K: VarifoldKernels
):
    """Partials of varifold_inner(a, b) w.r.t. a's centers/signals/frames/weights."""
    diff, u2, kp, sdiff, kf, kt = _kernel_matrices(a, b, K)
    ww = a.weights[:, None] * b.weights[None, :]
    d_centers = 2.0 * np.einsum(
        "ij,ijk->ik", radial_deriv(K.kp, u2) * kf * kt * ww, diff
    )
    d_signals = 2.0 * np.sum(kp * radial_deriv(K.kf, sdiff**2) * sdiff * kt * ww, axis=1)
    d_frames = grassmann_grad_sum(K.kt, a.frames, b.frames, kp * kf * ww)
    d_weights = (kp * kf * kt) @ b.weights
    return d_centers, d_signals, d_frames, d_weights


def fidelity(
    fs1: DiscreteFshape, target: DiscreteVarifold, K: VarifoldKernels
) -> float:
    """Squared varifold distance between fs1 and the target; clamped at 0."""
    mu = to_varifold(fs1)
    value = (
        varifold_inner(mu, mu, K)
        - 2.0 * varifold_inner(mu, target, K)
        + varifold_inner(target, target, K)
    )
    return max(value, 0.0)


def grad_fidelity(
    fs1: DiscreteFshape, target: DiscreteVarifold, K: VarifoldKernels
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the fidelity w.r.t. vertex positions and vertex signals.

    Chains the per-cell partials (center, frame, weight, mean signal) back to
    the vertices of each cell.
    """
    mu = to_varifold(fs1)
    dc_aa, ds_aa, du_aa, dw_aa = _inner_first_partials(mu, mu, K)
    dc_ab, ds_ab, du_ab, dw_ab = _inner_first_partials(mu, target, K)
    # d fidelity / d(cell data); the mu-mu term doubles by symmetry.
    dc = 2.0 * (dc_aa - dc_ab)
    ds = 2.0 * (ds_aa - ds_ab)
    du = 2.0 * (du_aa - du_ab)
    dw = 2.0 * (dw_aa - dw_ab)

    cells = fs1.cells
    d = fs1.dim_d
    grad_x = np.zeros_like(fs1.vertices)
    grad_f = np.zeros_like(fs1.signals)

    # Barycenters and mean signals spread uniformly over cell vertices.
    np.add.at(grad_x, cells, np.repeat(dc[:, None, :] / (d + 1), d + 1, axis=1))
    np.add.at(grad_f, cells, np.repeat(ds[:, None] / (d + 1), d + 1, axis=1))

    # Weights follow the cell-volume gradients.
    vol_grads = cell_volume_gradients(fs1)
    np.add.at(grad_x, cells, dw[:, None, None] * vol_grads)

    # Frames: chain through the normalization of the raw frame vector.
    pts = fs1.vertices[cells]
    if d == 1:
        edge = pts[:, 1] - pts[:, 0]
        length = np.linalg.norm(edge, axis=1)
        unit = edge / length[:, None]
        a = (du - np.sum(du * unit, axis=1)[:, None] * unit) / length[:, None]
        frame_contrib = np.stack([-a, a], axis=1)
    else:
        e1 = pts[:, 1] - pts[:, 0]
        e2 = pts[:, 2] - pts[:, 0]
        cross = np.cross(e1, e2)
        norm = np.linalg.norm(cross, axis=1)
        unit = cross / norm[:, None]
        a = (du - np.sum(du * unit, axis=1)[:, None] * unit) / norm[:, None]
        c1 = np.cross(e2, a)
        c2 = np.cross(a, e1)
        frame_contrib = np.stack([-(c1 + c2), c1, c2], axis=1)
    np.add.at(grad_x, cells, frame_contrib)
    return grad_x, grad_f
