"""
Sparse constraint rows ``A c >= b`` over the non-augmented prices of a surface.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Tuple

import numpy as np
from scipy import sparse

from staticarb.models.errors import DimensionMismatch
from staticarb.models.schemas import ConstraintKind
from staticarb.models.surface import Node


@dataclass(frozen=True)
class ConstraintRow:
    """One inequality ``sum(coef * c[var]) >= bound``.

    Augmented nodes (c = 1) never appear in ``terms``; their contribution is
    already folded into ``bound``.
    """

    kind: ConstraintKind
    terms: Tuple[Tuple[int, float], ...]
    bound: float
    provenance: Tuple[Node, ...]

    def residual(self, c: np.ndarray) -> float:
        return sum(coef * c[var] for var, coef in self.terms) - self.bound


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """The assembled reduced no-arbitrage system."""

    rows: Tuple[ConstraintRow, ...]
    n_vars: int
    per_category_count: Dict[ConstraintKind, int] = field(default_factory=dict)

    @property
    def row_count(self) -> int:
        return len(self.rows)

    @cached_property
    def _matrix(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        indptr = [0]
        indices, data = [], []
        for row in self.rows:
            for var, coef in row.terms:
                indices.append(var)
                data.append(coef)
            indptr.append(len(indices))
        a = sparse.csr_matrix(
            (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(len(self.rows), self.n_vars),
        )
        b = np.array([row.bound for row in self.rows], dtype=float)
        b.setflags(write=False)
        return a, b

    def to_sparse(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """Return ``(A, b)`` as a CSR matrix and a dense bound vector."""
        return self._matrix

    @cached_property
    def kinds(self) -> np.ndarray:
        """Row kinds as their string values, one per row."""
        return np.array([row.kind.value for row in self.rows], dtype=str)

    def residuals(self, c: np.ndarray) -> np.ndarray:
        """Row residuals ``A c - b``."""
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n_vars,):
            raise DimensionMismatch(self.n_vars, c.size, "price vector")
        a, b = self._matrix
        return a @ c - b
