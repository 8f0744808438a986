"""Spectral vector calculus and the free-evolution operators.

Everything here is diagonal per Fourier mode:

* curl, div, grad act via multiplication with i*k,
* the block operator m(u1, u2) = (curl u2, -curl u1) is skew-adjoint,
* the componentwise Laplacian equals grad div - curl curl blockwise and
  coincides with m^2 on divergence-free fields,
* the Leray/Helmholtz projection keeps u_hat(k) - k (k.u_hat)/|k|^2 and is
  the identity at k = 0 (constants are divergence-free on the torus),
* exp(t*m) rotates the divergence-free part with cos(|k| t) and
  sin(|k| t)/|k| blocks and leaves the gradient part untouched.

All Field6-level operations demand the spectral representation and raise
UsageError otherwise.  The raw-array helpers (curl/div/grad) expect spectral
data by contract.  For ``real_state`` fields, odd-order derivative operators
zero the Nyquist planes so real states stay real.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, UsageError
from .grid import (
    SPECTRAL,
    Field6,
    GridSpec,
    _require_representation,
    to_physical,
    to_spectral,
)

MAXWELL = "maxwell"
HODGE_LAPLACIAN = "hodge_laplacian"
HELMHOLTZ = "helmholtz"
SHARP_CUTOFF = "sharp_cutoff"
SMOOTH_CUTOFF = "smooth_cutoff"

_DENSE_KINDS = (MAXWELL, HODGE_LAPLACIAN, HELMHOLTZ, SHARP_CUTOFF, SMOOTH_CUTOFF)
_DENSE_DIM_CAP = 6 * 8**3


def _nyquist_mask(grid: GridSpec):
    """Multiplier that is 0 on the three Nyquist planes, 1 elsewhere."""
    n = grid.points_per_axis
    m = np.ones(n)
    m[n // 2] = 0.0
    return m.reshape(n, 1, 1) * m.reshape(1, n, 1) * m.reshape(1, 1, n)


def _k_vectors(grid: GridSpec, zero_nyquist: bool):
    kx, ky, kz = grid.k_components()
    if zero_nyquist:
        mask = _nyquist_mask(grid)
        return kx * mask, ky * mask, kz * mask
    n = grid.points_per_axis
    full = np.broadcast_to
    return (full(kx, (n, n, n)), full(ky, (n, n, n)), full(kz, (n, n, n)))


def curl(grid: GridSpec, u3: np.ndarray, zero_nyquist: bool = False) -> np.ndarray:
    """(curl u)^(k) = i k x u_hat(k) on a 3-component spectral block."""
    kx, ky, kz = _k_vectors(grid, zero_nyquist)
    out = np.empty_like(u3)
    out[0] = 1j * (ky * u3[2] - kz * u3[1])
    out[1] = 1j * (kz * u3[0] - kx * u3[2])
    out[2] = 1j * (kx * u3[1] - ky * u3[0])
    return out


def div(grid: GridSpec, u3: np.ndarray, zero_nyquist: bool = False) -> np.ndarray:
    """(div u)^(k) = i k . u_hat(k)."""
    kx, ky, kz = _k_vectors(grid, zero_nyquist)
    return 1j * (kx * u3[0] + ky * u3[1] + kz * u3[2])


def grad(grid: GridSpec, phi: np.ndarray, zero_nyquist: bool = False) -> np.ndarray:
    """(grad phi)^(k) = i k phi_hat(k)."""
    kx, ky, kz = _k_vectors(grid, zero_nyquist)
    return np.stack([1j * kx * phi, 1j * ky * phi, 1j * kz * phi])


def maxwell_apply(u: Field6) -> Field6:
    """Block map (u1, u2) -> (curl u2, -curl u1)."""
    _require_representation(u, SPECTRAL, "maxwell_apply")
    zn = u.real_state
    data = np.concatenate([
        curl(u.grid, u.block2, zero_nyquist=zn),
        -curl(u.grid, u.block1, zero_nyquist=zn),
    ])
    return u.with_data(data)


def hodge_laplacian_apply(u: Field6) -> Field6:
    """Componentwise Laplacian: u_hat(k) -> -|k|^2 u_hat(k)."""
    _require_representation(u, SPECTRAL, "hodge_laplacian_apply")
    return u.with_data(-u.grid.k_squared() * u.data)


def helmholtz_project(u: Field6) -> Field6:
    """Orthogonal projection onto divergence-free fields, blockwise."""
    _require_representation(u, SPECTRAL, "helmholtz_project")
    grid = u.grid
    kx, ky, kz = grid.k_components()
    k2 = grid.k_squared()
    inv_k2 = np.zeros_like(k2)
    nonzero = k2 > 0
    inv_k2[nonzero] = 1.0 / k2[nonzero]
    data = u.data.copy()
    for block in (data[:3], data[3:]):
        kdotu = kx * block[0] + ky * block[1] + kz * block[2]
        block[0] -= kx * kdotu * inv_k2
        block[1] -= ky * kdotu * inv_k2
        block[2] -= kz * kdotu * inv_k2
    return u.with_data(data)


def maxwell_group(t: float, u: Field6) -> Field6:
    """Exact propagator exp(t*m), mode-wise.

    On the divergence-free part: cos(|k| t) I + sin(|k| t)/|k| * m.
    Identity on the gradient part and at k = 0.
    """
    _require_representation(u, SPECTRAL, "maxwell_group")
    grid = u.grid
    kx, ky, kz = _k_vectors(grid, zero_nyquist=u.real_state)
    k2 = kx**2 + ky**2 + kz**2
    kabs = np.sqrt(k2)
    inv_kabs = np.zeros_like(kabs)
    nonzero = kabs > 0
    inv_kabs[nonzero] = 1.0 / kabs[nonzero]

    # split each block into divergence-free and gradient parts
    inv_k2 = inv_kabs**2
    data = u.data
    out = np.empty_like(data)
    a = data[:3]
    b = data[3:]
    kdota = (kx * a[0] + ky * a[1] + kz * a[2]) * inv_k2
    kdotb = (kx * b[0] + ky * b[1] + kz * b[2]) * inv_k2
    a_grad = np.stack([kx * kdota, ky * kdota, kz * kdota])
    b_grad = np.stack([kx * kdotb, ky * kdotb, kz * kdotb])
    a_h = a - a_grad
    b_h = b - b_grad

    cos = np.cos(kabs * t)
    sinc = np.sin(kabs * t) * inv_kabs
    # m(a_h, b_h) = (i k x b_h, -i k x a_h)
    cxb = np.stack([
        1j * (ky * b_h[2] - kz * b_h[1]),
        1j * (kz * b_h[0] - kx * b_h[2]),
        1j * (kx * b_h[1] - ky * b_h[0]),
    ])
    cxa = np.stack([
        1j * (ky * a_h[2] - kz * a_h[1]),
        1j * (kz * a_h[0] - kx * a_h[2]),
        1j * (kx * a_h[1] - ky * a_h[0]),
    ])
    out[:3] = a_grad + cos * a_h + sinc * cxb
    out[3:] = b_grad + cos * b_h - sinc * cxa
    return u.with_data(out)


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Explicit matrix acting on flattened physical-representation vectors.

    Flattening order is component-major, z-fastest (same as ``data.ravel()``
    and the checkpoint layout).  Used as a brute-force oracle on tiny grids.
    """

    grid: GridSpec
    kind: str
    matrix: np.ndarray

    @property
    def dimension(self):
        return self.matrix.shape[0]

    def apply(self, f: Field6) -> Field6:
        if f.grid != self.grid:
            raise UsageError("DenseOperator.apply: grid mismatch")
        out = self.matrix @ f.data.ravel()
        n = self.grid.points_per_axis
        return Field6(self.grid, f.representation, out.reshape(6, n, n, n))


def _dft_matrix(grid: GridSpec) -> np.ndarray:
    """Unitary DFT matrix on one scalar component, built from first principles."""
    n = grid.points_per_axis
    x = grid.axes()
    k = grid.wavenumbers
    # one-dimensional unitary DFT: W[m, j] = exp(-i k_m x_j)/sqrt(n)
    w1 = np.exp(-1j * np.outer(k, x)) / np.sqrt(n)
    return np.kron(np.kron(w1, w1), w1)


def _mode_diagonals(grid: GridSpec):
    kx, ky, kz = grid.k_components()
    n = grid.points_per_axis
    shape = (n, n, n)
    return (np.broadcast_to(kx, shape).ravel(),
            np.broadcast_to(ky, shape).ravel(),
            np.broadcast_to(kz, shape).ravel())


def _cross_matrix(grid: GridSpec) -> np.ndarray:
    """Spectral-side curl: 3x3 block of diagonals for i k x."""
    kx, ky, kz = _mode_diagonals(grid)
    z = np.zeros_like(kx)
    rows = [
        [z, -kz, ky],
        [kz, z, -kx],
        [-ky, kx, z],
    ]
    blocks = [[1j * np.diag(entry) for entry in row] for row in rows]
    return np.block(blocks)


def dense_operator(kind: str, grid: GridSpec, level: int | None = None,
                   window=None) -> DenseOperator:
    """Explicit matrix oracle for the fast spectral operators.

    ``level`` is required for the cutoffs; ``window`` optionally overrides the
    standard smooth window.  Guarded to at most 6*8^3 unknowns.
    """
    if kind not in _DENSE_KINDS:
        raise ConfigurationError(f"unknown dense operator kind {kind!r}")
    dim = 6 * grid.points_per_axis**3
    if dim > _DENSE_DIM_CAP:
        raise ConfigurationError(
            f"dense operator dimension {dim} exceeds cap {_DENSE_DIM_CAP}")

    m = grid.points_per_axis**3
    w = _dft_matrix(grid)
    w3 = np.kron(np.eye(3), w)
    kx, ky, kz = _mode_diagonals(grid)
    k2 = kx**2 + ky**2 + kz**2

    if kind == MAXWELL:
        c = w3.conj().T @ _cross_matrix(grid) @ w3
        zero = np.zeros_like(c)
        matrix = np.block([[zero, c], [-c, zero]])
    elif kind == HODGE_LAPLACIAN:
        spec = np.diag(np.tile(-k2, 6))
        w6 = np.kron(np.eye(6), w)
        matrix = w6.conj().T @ spec @ w6
    elif kind == HELMHOLTZ:
        inv_k2 = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
        comps = (kx, ky, kz)
        proj = np.block([
            [np.diag((1.0 if i == j else 0.0) - comps[i] * comps[j] * inv_k2)
             for j in range(3)]
            for i in range(3)
        ])
        p3 = w3.conj().T @ proj @ w3
        zero = np.zeros_like(p3)
        matrix = np.block([[p3, zero], [zero, p3]])
    else:
        if level is None:
            raise ConfigurationError(f"dense operator {kind!r} needs a level")
        from .multipliers import CutoffLevel, sharp_mask, smooth_mask

        lev = level if isinstance(level, CutoffLevel) else CutoffLevel(level)
        if kind == SHARP_CUTOFF:
            mult = sharp_mask(grid, lev).astype(float).ravel()
        else:
            mult = smooth_mask(grid, lev, window).ravel()
        spec = np.diag(np.tile(mult, 6))
        w6 = np.kron(np.eye(6), w)
        matrix = w6.conj().T @ spec @ w6

    assert matrix.shape == (dim, dim) and m * 6 == dim
    return DenseOperator(grid=grid, kind=kind, matrix=matrix)


def dense_group_matrix(t: float, grid: GridSpec) -> np.ndarray:
    """Matrix exponential oracle for exp(t*m) via scaling-and-squaring."""
    op = dense_operator(MAXWELL, grid)
    return scipy.linalg.expm(t * op.matrix)

