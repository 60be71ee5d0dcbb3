"""Covariate descriptors for the two sampling designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor import TuckerTensor, as_tensor, multi_mode_product


@dataclass(frozen=True, eq=False)
class DenseCovariate:
    """A covariate stored as a full array (Gaussian design)."""

    tensor: np.ndarray

    def inner(self, T) -> float:
        if isinstance(T, TuckerTensor):
            if T.dims != self.tensor.shape:
                raise DimensionError(f"dims {T.dims} vs covariate {self.tensor.shape}")
            reduced = multi_mode_product(self.tensor, T.factors, transpose=True)
            return float(np.vdot(reduced, T.core))
        T = as_tensor(T)
        if T.shape != self.tensor.shape:
            raise DimensionError(f"dims {T.shape} vs covariate {self.tensor.shape}")
        return float(np.vdot(self.tensor, T))

    def dense(self, dims=None) -> np.ndarray:
        return self.tensor


@dataclass(frozen=True)
class EntryCovariate:
    """``scale * E_index``: a scaled one-hot tensor (entry design)."""

    index: tuple
    scale: float

    def inner(self, T) -> float:
        if isinstance(T, TuckerTensor):
            return self.scale * T.entry(self.index)
        return self.scale * float(np.asarray(T)[self.index])

    def dense(self, dims) -> np.ndarray:
        out = np.zeros(tuple(dims))
        out[self.index] = self.scale
        return out
