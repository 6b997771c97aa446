"""Polynomial feature library and per-sample coefficient matrices.

Each sampled parameter owns a coefficient matrix ``xi`` of shape
(n_features, latent_dim) defining a local latent ODE
``dz/dt = features(z) @ xi``. Feature columns are the monomials of the
latent coordinates up to the configured total degree, in a fixed order so
that serialized coefficient matrices are portable:

    [1, z_1, ..., z_n, z_1*z_1, z_1*z_2, ..., z_n*z_n]   (i <= j pairs)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BasisLibrary:
    latent_dim: int
    poly_order: int = 1
    include_constant: bool = True
    exponents: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.poly_order not in (1, 2):
            raise ValueError("poly_order must be 1 or 2")
        rows = []
        if self.include_constant:
            rows.append(np.zeros(self.latent_dim, dtype=int))
        for i in range(self.latent_dim):
            e = np.zeros(self.latent_dim, dtype=int)
            e[i] = 1
            rows.append(e)
        if self.poly_order == 2:
            for i in range(self.latent_dim):
                for j in range(i, self.latent_dim):
                    e = np.zeros(self.latent_dim, dtype=int)
                    e[i] += 1
                    e[j] += 1
                    rows.append(e)
        object.__setattr__(self, "exponents", np.array(rows, dtype=int))

    @property
    def n_features(self) -> int:
        return self.exponents.shape[0]

    def zero_coeffs(self) -> np.ndarray:
        return np.zeros((self.n_features, self.latent_dim))


@dataclass
class DiCoeffs:
    """Coefficient matrix of one local latent-dynamics model."""

    xi: np.ndarray  # (n_features, latent_dim)
    owner_param_index: int

    def validate(self, library: BasisLibrary) -> None:
        expected = (library.n_features, library.latent_dim)
        if self.xi.shape != expected:
            raise ValueError(f"xi shape {self.xi.shape} != {expected}")


@dataclass
class LatentTrajectory:
    """Latent states and their time derivatives, one column per time step."""

    Z: np.ndarray
    Z_dot: np.ndarray

    def __post_init__(self):
        if self.Z.shape[1] != self.Z_dot.shape[1]:
            raise ValueError("Z and Z_dot must have equal column counts")


def eval_library(library: BasisLibrary, z: np.ndarray) -> np.ndarray:
    """Monomial feature row(s) of z in the library's fixed column order.

    Accepts a single latent vector (latent_dim,) or a batch of rows
    (n, latent_dim); returns (n_features,) or (n, n_features) accordingly.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zb = z[None, :] if single else z
    if zb.shape[1] != library.latent_dim:
        raise ValueError(f"latent vector length {zb.shape[1]} != {library.latent_dim}")
    cols = [
        np.prod(zb ** library.exponents[c][None, :], axis=1)
        for c in range(library.n_features)
    ]
    theta = np.stack(cols, axis=1)
    return theta[0] if single else theta


def latent_rhs(library: BasisLibrary, xi: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Right-hand side of the local latent ODE: features(z) @ xi."""
    if xi.shape != (library.n_features, library.latent_dim):
        raise ValueError(
            f"xi shape {xi.shape} != {(library.n_features, library.latent_dim)}"
        )
    return eval_library(library, z) @ xi


def di_residual_zdot(
    library: BasisLibrary, xi: np.ndarray, Z: np.ndarray, Z_dot: np.ndarray
) -> float:
    """Mean over columns of the squared latent-rate mismatch ||zdot - features(z) xi||^2."""
    if Z.shape != Z_dot.shape:
        raise ValueError("Z and Z_dot must share shape")
    pred = latent_rhs(library, xi, Z.T)  # (n_cols, latent_dim)
    diff = Z_dot.T - pred
    return float(np.sum(diff * diff) / Z.shape[1])
