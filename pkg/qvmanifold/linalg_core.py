"""
Inner products, ordered eigendecompositions, Gram-Schmidt and the subspace distance
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from qvmanifold.exceptions import DegenerateBasisError, InvalidInputError, ShapeError

logger = logging.getLogger(__name__)

MODULE = 'linalg_core'

EUCLIDEAN = 'euclidean'
SOBOLEV_GRID = 'sobolev-grid'

SYMMETRY_RTOL = 1e-10
# Normalized Gram determinant below which a family counts as dependent
GRAM_DET_RTOL = 1e-12

Elements = Union[np.ndarray, Sequence[np.ndarray]]


@dataclass(frozen=True, eq=False)
class InnerProductSpec:
    """Euclidean dot product or the discrete Sobolev form on a space grid"""

    kind: str = EUCLIDEAN
    x_grid: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, SOBOLEV_GRID):
            raise InvalidInputError(f"unknown inner product kind: {self.kind}", MODULE)
        if self.kind == SOBOLEV_GRID:
            if self.x_grid is None:
                raise InvalidInputError("sobolev-grid inner product needs an x_grid", MODULE)
            grid = np.asarray(self.x_grid, dtype=float)
            if grid.ndim != 1 or grid.size < 2:
                raise InvalidInputError("x_grid needs at least 2 points", MODULE)
            if np.any(np.diff(grid) <= 0):
                raise InvalidInputError("x_grid must be strictly increasing", MODULE)
            object.__setattr__(self, 'x_grid', grid)

    @staticmethod
    def euclidean() -> 'InnerProductSpec':
        return InnerProductSpec(EUCLIDEAN)

    @staticmethod
    def sobolev(x_grid: np.ndarray) -> 'InnerProductSpec':
        return InnerProductSpec(SOBOLEV_GRID, np.asarray(x_grid, dtype=float))

    @property
    def element_size(self) -> Optional[int]:
        return None if self.x_grid is None else int(self.x_grid.size)

    def is_compatible(self, other: 'InnerProductSpec') -> bool:
        if self.kind != other.kind:
            return False
        if self.kind == EUCLIDEAN:
            return True
        return self.x_grid.shape == other.x_grid.shape and bool(np.array_equal(self.x_grid, other.x_grid))

    def coordinates(self, elements: np.ndarray) -> np.ndarray:
        """Rows mapped to coordinates in which this form is the Euclidean dot product

        The Sobolev form only sees increments, so f and f - f(a) share coordinates.
        """
        elements = np.atleast_2d(np.asarray(elements))
        if self.kind == EUCLIDEAN:
            return elements
        if elements.shape[1] != self.x_grid.size:
            raise ShapeError(
                f"grid functions must have {self.x_grid.size} samples, got {elements.shape[1]}", MODULE)
        return np.diff(elements, axis=1) / np.sqrt(np.diff(self.x_grid))

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        if self.kind == EUCLIDEAN:
            f = np.asarray(f, dtype=float)
            g = np.asarray(g, dtype=float)
            if f.shape != g.shape:
                raise ShapeError(f"vector shapes differ: {f.shape} vs {g.shape}", MODULE)
            return float(np.dot(f, g))
        return sobolev_inner(f, g, self.x_grid)

    def gram(self, elements: np.ndarray) -> np.ndarray:
        coords = self.coordinates(elements)
        return coords @ coords.conj().T

    def to_dict(self) -> Dict:
        result = {'kind': self.kind}
        if self.x_grid is not None:
            result['x_grid'] = self.x_grid.tolist()
        return result


@dataclass
class Eigensystem:
    """Eigenvalues in descending order; column i of `vectors` belongs to values[i]"""

    values: np.ndarray
    vectors: np.ndarray

    def __len__(self):
        return self.values.size

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T

    def to_dict(self) -> Dict:
        return {'values': self.values.tolist()}


@dataclass
class SubspaceBasis:
    """Spanning family of a subspace; rows of `vectors` are the elements"""

    vectors: np.ndarray
    inner_product: InnerProductSpec
    orthonormal: bool = False

    def __post_init__(self):
        vectors = np.asarray(self.vectors)
        if vectors.ndim == 1:
            vectors = vectors[None, :]
        if vectors.ndim != 2:
            raise ShapeError(f"basis elements must form a 2-D array, got shape {vectors.shape}", MODULE)
        size = self.inner_product.element_size
        if size is not None and vectors.shape[1] != size:
            raise ShapeError(f"basis elements must have {size} samples, got {vectors.shape[1]}", MODULE)
        self.vectors = vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def element_size(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        return self.inner_product.gram(self.vectors)

    def orthonormalized(self) -> 'SubspaceBasis':
        if self.orthonormal or self.dim == 0:
            return self
        return gram_schmidt(self.vectors, self.inner_product)

    def to_dict(self) -> Dict:
        return {
            'dim': self.dim,
            'orthonormal': self.orthonormal,
            'inner_product': self.inner_product.kind,
        }


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A)
    if not np.iscomplexobj(A):
        A = A.astype(float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}", MODULE)
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("matrix contains non-finite entries", MODULE)
    return A


def eigh_descending(A) -> Eigensystem:
    """Eigensystem of a real symmetric (or complex Hermitian) matrix, largest eigenvalue first

    Each eigenvector is scaled so that its largest-magnitude entry is real and positive.
    """
    A = _as_matrix(A)
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    asymmetry = float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0
    if asymmetry > SYMMETRY_RTOL * max(scale, 1.0):
        raise InvalidInputError(f"matrix is not symmetric (max deviation {asymmetry:.3e})", MODULE)
    A = (A + A.conj().T) / 2
    values, vectors = linalg.eigh(A)
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    for j in range(vectors.shape[1]):
        column = vectors[:, j]
        pivot = column[np.argmax(np.abs(column))]
        if pivot != 0:
            vectors[:, j] = column * (np.abs(pivot) / pivot)
    if not np.iscomplexobj(A):
        vectors = vectors.real
    return Eigensystem(values=values, vectors=vectors)


def _stack(elements: Elements) -> np.ndarray:
    if isinstance(elements, np.ndarray):
        array = elements
    else:
        array = np.array([np.asarray(e) for e in elements])
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2:
        raise ShapeError(f"elements must stack to a 2-D array, got shape {array.shape}", MODULE)
    return array.astype(complex) if np.iscomplexobj(array) else array.astype(float)


def gram_schmidt(vectors: Elements, ip: InnerProductSpec) -> SubspaceBasis:
    """Classical Gram-Schmidt in the given order, each step run twice for stability"""
    elements = _stack(vectors)
    if elements.shape[0] == 0:
        return SubspaceBasis(elements, ip, orthonormal=True)
    gram = ip.gram(elements)
    norms_sq = np.real(np.diag(gram))
    if np.any(norms_sq <= 0):
        raise DegenerateBasisError(f"element {int(np.argmin(norms_sq))} has zero norm", MODULE)
    scaled = gram / np.sqrt(np.outer(norms_sq, norms_sq))
    det = float(np.real(linalg.det(scaled)))
    if det < GRAM_DET_RTOL:
        raise DegenerateBasisError(f"elements are linearly dependent (normalized Gram determinant {det:.3e})",
                                   MODULE)

    coords = ip.coordinates(elements)
    basis = np.zeros_like(elements)
    basis_coords = np.zeros_like(coords)
    for k in range(elements.shape[0]):
        v = elements[k].copy()
        c = coords[k].copy()
        for _ in range(2):
            if k:
                projections = basis_coords[:k].conj() @ c
                v = v - projections @ basis[:k]
                c = c - projections @ basis_coords[:k]
        norm = float(np.sqrt(np.real(np.vdot(c, c))))
        if norm <= np.sqrt(GRAM_DET_RTOL * norms_sq[k]):
            raise DegenerateBasisError(f"element {k} lies in the span of the previous ones", MODULE)
        basis[k] = v / norm
        basis_coords[k] = c / norm
    return SubspaceBasis(basis, ip, orthonormal=True)


def sobolev_inner(f: np.ndarray, g: np.ndarray, x_grid: np.ndarray) -> float:
    """Discrete first-derivative form Σ_j Δf(x_j)Δg(x_j)/Δx_j"""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    if f.shape != x_grid.shape or g.shape != x_grid.shape:
        raise ShapeError(
            f"grid functions must match the grid length {x_grid.size}: got {f.shape} and {g.shape}", MODULE)
    return float(np.sum(np.diff(f) * np.diff(g) / np.diff(x_grid)))


def subspace_distance(A: SubspaceBasis, B: SubspaceBasis) -> float:
    """D = sqrt(1 - Σ⟨ζ_2j, ζ_1k⟩² / max(m1, m2)) on orthonormal bases of both spans"""
    if not A.inner_product.is_compatible(B.inner_product):
        raise InvalidInputError("subspaces use different inner products", MODULE)
    if A.element_size != B.element_size:
        raise InvalidInputError(
            f"element dimensions differ: {A.element_size} vs {B.element_size}", MODULE)
    m = max(A.dim, B.dim)
    if m == 0:
        return 0.0
    if min(A.dim, B.dim) == 0:
        return 1.0
    small, large = (A, B) if A.dim <= B.dim else (B, A)
    ip = A.inner_product
    ca = ip.coordinates(small.orthonormalized().vectors)
    cb = ip.coordinates(large.orthonormalized().vectors)
    # with m = dim of the larger space, m - Σ⟨ζ_2j, ζ_1k⟩² is the squared residual of projecting
    # its basis onto the smaller space; summing residuals avoids cancellation near zero
    residual = cb - (cb @ ca.conj().T) @ ca
    distance_sq = float(np.sum(np.abs(residual) ** 2)) / m
    return float(np.sqrt(min(1.0, max(0.0, distance_sq))))
