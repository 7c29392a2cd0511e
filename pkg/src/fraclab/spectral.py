"""Separable mixed-BC domains, closed-form eigenbases, and spectral transforms.

The Laplacian on an axis-aligned box with whole faces assigned to either the
Dirichlet or the Neumann part has a tensor-product eigenbasis built from four
1D families (Dirichlet/Neumann at each end).  Fractional powers, norms and
grid transforms all act on coefficient vectors against that basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ShapeError, ValidationError

__all__ = [
    "FractionalParams",
    "MixedRectangleDomain",
    "EigenBasis",
    "SpectralField",
    "build_basis",
    "synthesize",
    "analyze",
    "apply_fractional",
    "hs_norm",
    "lp_norm",
    "first_fractional_eigenvalue",
]


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class FractionalParams:
    """Scalar environment of the problem: order s, dimension, derived constants."""

    s: float
    dim: int

    def __post_init__(self):
        if not 0.5 < self.s < 1.0:
            raise ValidationError(f"s must lie in (1/2, 1), got {self.s}")
        if self.dim < 2:
            raise ValidationError(f"dimension must be >= 2, got {self.dim}")
        if self.dim <= 2 * self.s:
            raise ValidationError(f"need dim > 2s, got dim={self.dim}, s={self.s}")

    @property
    def crit_exp(self) -> float:
        """Critical Sobolev exponent 2N/(N - 2s)."""
        return 2.0 * self.dim / (self.dim - 2.0 * self.s)

    @property
    def ks(self) -> float:
        """Extension normalization 2^{2s-1} Gamma(s)/Gamma(1-s)."""
        return 2.0 ** (2.0 * self.s - 1.0) * math.gamma(self.s) / math.gamma(1.0 - self.s)

    @property
    def sobolev_sN(self) -> float:
        """Best fractional Sobolev constant for (s, dim)."""
        from .functionals import sobolev_constant

        return sobolev_constant(self.dim, self.s)


# ---------------------------------------------------------------------------
# domain

_LOW, _HIGH = "min", "max"


def face_token(axis: int, side: str) -> str:
    """Canonical face name, e.g. 'x0min' is the axis-0 lower face."""
    if side not in (_LOW, _HIGH):
        raise ValidationError(f"face side must be 'min' or 'max', got {side!r}")
    return f"x{axis}{side}"


def _parse_face(token: str, dim: int) -> tuple[int, str]:
    t = token.strip().lower()
    if not t.startswith("x"):
        raise ValidationError(f"bad face token {token!r}; expected like 'x0min'")
    for side in (_LOW, _HIGH):
        if t.endswith(side):
            try:
                axis = int(t[1:-len(side)])
            except ValueError:
                raise ValidationError(f"bad face token {token!r}") from None
            if not 0 <= axis < dim:
                raise ValidationError(f"face {token!r} names axis {axis} outside 0..{dim-1}")
            return axis, side
    raise ValidationError(f"bad face token {token!r}; expected like 'x0min'")


@dataclass(frozen=True)
class MixedRectangleDomain:
    """Axis-aligned box with whole faces carrying Dirichlet or Neumann data."""

    lengths: tuple[float, ...]
    dirichlet_faces: frozenset[str]

    def __init__(self, lengths, dirichlet_faces):
        object.__setattr__(self, "lengths", tuple(float(L) for L in lengths))
        object.__setattr__(self, "dirichlet_faces",
                           frozenset(str(f).strip().lower() for f in dirichlet_faces))
        if any(L <= 0 for L in self.lengths):
            raise ValidationError(f"edge lengths must be positive, got {self.lengths}")
        dim = len(self.lengths)
        if dim < 1:
            raise ValidationError("domain needs at least one axis")
        for f in self.dirichlet_faces:
            _parse_face(f, dim)
        nfaces = 2 * dim
        if not self.dirichlet_faces:
            raise ValidationError("Dirichlet part must be nonempty")
        if len(self.dirichlet_faces) >= nfaces:
            raise ValidationError("Dirichlet part must be a strict subset of the boundary")

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def all_faces(self) -> tuple[str, ...]:
        return tuple(face_token(a, s) for a in range(self.dim) for s in (_LOW, _HIGH))

    @property
    def neumann_faces(self) -> frozenset[str]:
        return frozenset(self.all_faces) - self.dirichlet_faces

    @property
    def interface(self) -> tuple[tuple[str, str], ...]:
        """Corner facets where a Dirichlet face closure meets a Neumann one.

        Faces on different axes always share an (N-2)-dimensional edge of the
        box; same-axis opposite faces do not touch.
        """
        pairs = []
        for fd in sorted(self.dirichlet_faces):
            ad, _ = _parse_face(fd, self.dim)
            for fn in sorted(self.neumann_faces):
                an, _ = _parse_face(fn, self.dim)
                if ad != an:
                    pairs.append((fd, fn))
        return tuple(pairs)

    def axis_bc(self, axis: int) -> tuple[str, str]:
        """('D'|'N', 'D'|'N') at the (low, high) ends of an axis."""
        lo = "D" if face_token(axis, _LOW) in self.dirichlet_faces else "N"
        hi = "D" if face_token(axis, _HIGH) in self.dirichlet_faces else "N"
        return lo, hi

    def face_point(self, token: str, fractions=None) -> tuple[float, ...]:
        """A point on the given face; defaults to the face midpoint."""
        axis, side = _parse_face(token, self.dim)
        if fractions is None:
            fractions = [0.5] * self.dim
        x = [f * L for f, L in zip(fractions, self.lengths)]
        x[axis] = 0.0 if side == _LOW else self.lengths[axis]
        return tuple(x)

    def faces_containing(self, point) -> tuple[str, ...]:
        out = []
        for axis in range(self.dim):
            if abs(point[axis]) <= 1e-12 * self.lengths[axis]:
                out.append(face_token(axis, _LOW))
            if abs(point[axis] - self.lengths[axis]) <= 1e-12 * self.lengths[axis]:
                out.append(face_token(axis, _HIGH))
        return tuple(out)

    def distance_to_dirichlet(self, point) -> float:
        """Distance from a point to the nearest Dirichlet face plane."""
        d = math.inf
        for f in self.dirichlet_faces:
            axis, side = _parse_face(f, self.dim)
            plane = 0.0 if side == _LOW else self.lengths[axis]
            d = min(d, abs(point[axis] - plane))
        return d

    def contains(self, point) -> bool:
        return all(-1e-12 <= point[a] <= self.lengths[a] * (1 + 1e-12) for a in range(self.dim))


# ---------------------------------------------------------------------------
# 1D eigenfamilies

def _axis_eigs(bc: tuple[str, str], M: int, L: float):
    """Frequencies kappa_k (eigenvalues kappa^2) for one axis; k = 0..M-1."""
    k = np.arange(M, dtype=float)
    lo, hi = bc
    if (lo, hi) == ("D", "D"):
        kap = (k + 1.0) * math.pi / L
    elif (lo, hi) in (("D", "N"), ("N", "D")):
        kap = (k + 0.5) * math.pi / L
    else:  # N, N; includes the constant mode
        kap = k * math.pi / L
    return kap


def _axis_values(bc: tuple[str, str], kap: np.ndarray, L: float, x: np.ndarray):
    """L2-normalized 1D eigenfunction samples, shape (M, len(x))."""
    lo, hi = bc
    amp = math.sqrt(2.0 / L)
    if (lo, hi) == ("D", "D"):
        vals = amp * np.sin(np.outer(kap, x))
    elif (lo, hi) == ("D", "N"):
        vals = amp * np.sin(np.outer(kap, x))
    elif (lo, hi) == ("N", "D"):
        vals = amp * np.cos(np.outer(kap, x))
    else:
        vals = amp * np.cos(np.outer(kap, x))
        vals[0] = math.sqrt(1.0 / L)
    return vals


def _axis_values_at(domain: MixedRectangleDomain, axis: int, kap: float, k: int, x: float) -> float:
    """Single 1D eigenfunction value (used for pointwise evaluation)."""
    L = domain.lengths[axis]
    bc = domain.axis_bc(axis)
    amp = math.sqrt(2.0 / L)
    if bc == ("D", "D") or bc == ("D", "N"):
        return amp * math.sin(kap * x)
    if bc == ("N", "D"):
        return amp * math.cos(kap * x)
    if k == 0:
        return math.sqrt(1.0 / L)
    return amp * math.cos(kap * x)


# ---------------------------------------------------------------------------
# basis


@dataclass(frozen=True)
class EigenBasis:
    """Tensor-product eigenbasis of -Laplace with mixed BCs on a box.

    Modes are globally sorted by ascending eigenvalue, ties broken
    lexicographically by the per-axis index tuple, so field coefficient
    vectors are reproducible across runs.
    """

    domain: MixedRectangleDomain
    modes_per_axis: int
    quad_points_per_axis: int
    eigenvalues: np.ndarray          # (n_modes,) ascending
    mode_indices: np.ndarray         # (n_modes, dim) per-axis indices
    axis_frequencies: tuple          # per-axis kappa arrays (M,)
    axis_values: tuple               # per-axis tables (M, G)
    nodes: tuple                     # per-axis quadrature nodes (G,)
    weights: tuple                   # per-axis quadrature weights (G,)
    _tensor_index: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return tuple(len(n) for n in self.nodes)

    @cached_property
    def grid_weights(self) -> np.ndarray:
        W = self.weights[0]
        for w in self.weights[1:]:
            W = np.multiply.outer(W, w)
        return W.reshape(-1)

    @cached_property
    def grid_points(self) -> np.ndarray:
        """(n_grid, dim) coordinates of the tensor quadrature nodes."""
        mesh = np.meshgrid(*self.nodes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def mode_frequencies(self, j: int) -> tuple[float, ...]:
        return tuple(self.axis_frequencies[a][self.mode_indices[j, a]] for a in range(self.dim))


def build_basis(domain: MixedRectangleDomain, modes_per_axis: int,
                quad_points_per_axis: int | None = None) -> EigenBasis:
    """Construct the eigenbasis with tensor Gauss-Legendre quadrature.

    `quad_points_per_axis` defaults to max(2M, M+24); values below the 2M
    anti-aliasing floor are rejected (the critical nonlinearity |u|^{2*-1}
    is evaluated on this grid).
    """
    M = int(modes_per_axis)
    if M < 1:
        raise ValidationError("modes_per_axis must be >= 1")
    if quad_points_per_axis is None:
        G = max(2 * M, M + 24)
    else:
        G = int(quad_points_per_axis)
        if G < 2 * M:
            raise ValidationError(
                f"quad_points_per_axis must be >= 2*modes_per_axis={2*M}, got {G}")

    dim = domain.dim
    freqs, tables, nodes, weights = [], [], [], []
    for a in range(dim):
        L = domain.lengths[a]
        x, w = np.polynomial.legendre.leggauss(G)
        x = 0.5 * L * (x + 1.0)
        x = 0.5 * (x + (L - x[::-1]))      # exact mirror symmetry of the grid
        w = 0.5 * L * w
        kap = _axis_eigs(domain.axis_bc(a), M, L)
        vals = _axis_values(domain.axis_bc(a), kap, L, x)
        freqs.append(kap)
        tables.append(vals)
        nodes.append(x)
        weights.append(w)

    # global ordering: ascending eigenvalue, lexicographic tie-break on indices
    lam_axes = [k ** 2 for k in freqs]
    lam_tensor = lam_axes[0]
    for la in lam_axes[1:]:
        lam_tensor = np.add.outer(lam_tensor, la)
    lam_flat = lam_tensor.reshape(-1)
    idx_tensor = np.indices((M,) * dim).reshape(dim, -1).T   # (M^dim, dim), C order
    order = np.lexsort(tuple(idx_tensor[:, a] for a in reversed(range(dim))) + (lam_flat,))
    mode_indices = idx_tensor[order]
    eigenvalues = lam_flat[order]
    tensor_index = np.ravel_multi_index(mode_indices.T, (M,) * dim)

    for arr in (eigenvalues, mode_indices, tensor_index):
        arr.setflags(write=False)
    for t in tables + nodes + weights + freqs:
        t.setflags(write=False)

    return EigenBasis(
        domain=domain,
        modes_per_axis=M,
        quad_points_per_axis=G,
        eigenvalues=eigenvalues,
        mode_indices=mode_indices,
        axis_frequencies=tuple(freqs),
        axis_values=tuple(tables),
        nodes=tuple(nodes),
        weights=tuple(weights),
        _tensor_index=tensor_index,
    )


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True)
class SpectralField:
    """A function represented by its coefficient vector against an EigenBasis."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValidationError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return self.coeffs.size

    def __add__(self, other):
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.coeffs - other.coeffs)

    def __mul__(self, c: float):
        return SpectralField(self.coeffs * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(-self.coeffs)


def unit_field(basis: EigenBasis, j: int) -> SpectralField:
    c = np.zeros(basis.n_modes)
    c[j] = 1.0
    return SpectralField(c)


def _check_field(field: SpectralField, basis: EigenBasis):
    if field.coeffs.size != basis.n_modes:
        raise ShapeError(
            f"field has {field.coeffs.size} coefficients, basis has {basis.n_modes} modes")


def _coeffs_to_tensor(coeffs: np.ndarray, basis: EigenBasis) -> np.ndarray:
    M, dim = basis.modes_per_axis, basis.dim
    tensor = np.zeros(M ** dim)
    tensor[basis._tensor_index] = coeffs
    return tensor.reshape((M,) * dim)


def _tensor_to_coeffs(tensor: np.ndarray, basis: EigenBasis) -> np.ndarray:
    return tensor.reshape(-1)[basis._tensor_index]


def synthesize(field: SpectralField, basis: EigenBasis) -> np.ndarray:
    """Pointwise values sum_j a_j phi_j(x_g) on the flattened tensor grid."""
    _check_field(field, basis)
    out = _coeffs_to_tensor(field.coeffs, basis)
    for a in range(basis.dim):
        # contract leading mode axis against the (M, G) table; axes cycle
        out = np.tensordot(out, basis.axis_values[a], axes=([0], [0]))
    return out.reshape(-1)


def analyze(values: np.ndarray, basis: EigenBasis) -> SpectralField:
    """Quadrature projection a_j = <u, phi_j> of grid samples."""
    values = np.asarray(values, dtype=float)
    if values.size != int(np.prod(basis.grid_shape)):
        raise ShapeError(
            f"got {values.size} samples, basis grid has {int(np.prod(basis.grid_shape))} points")
    out = values.reshape(basis.grid_shape)
    for a in range(basis.dim):
        wtab = basis.axis_values[a] * basis.weights[a]
        out = np.tensordot(out, wtab, axes=([0], [1]))
    return SpectralField(_tensor_to_coeffs(out, basis))


def apply_fractional(field: SpectralField, params: FractionalParams,
                     basis: EigenBasis) -> SpectralField:
    """Coefficient-wise action a_j -> lambda_j^s a_j of the fractional operator."""
    _check_field(field, basis)
    return SpectralField(field.coeffs * basis.eigenvalues ** params.s)


def hs_norm(field: SpectralField, params: FractionalParams, basis: EigenBasis) -> float:
    """Spectral H^s norm (sum a_j^2 lambda_j^s)^{1/2}."""
    _check_field(field, basis)
    return math.sqrt(float(np.sum(field.coeffs ** 2 * basis.eigenvalues ** params.s)))


def lp_norm(field: SpectralField, p: float, basis: EigenBasis) -> float:
    """L^p norm of the synthesized field by tensor quadrature."""
    if p < 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    vals = synthesize(field, basis)
    return float(np.sum(basis.grid_weights * np.abs(vals) ** p)) ** (1.0 / p)


def first_fractional_eigenvalue(basis: EigenBasis, params: FractionalParams) -> float:
    """min_j lambda_j^s; the basis is sorted, so this is the first entry."""
    return float(basis.eigenvalues[0] ** params.s)
