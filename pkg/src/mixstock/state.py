"""Full parameter state of one MCMC draw."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


@dataclass
class ModelState:
    """Allele frequencies, mixture proportions, assortative coefficient and
    the prior-specific hyperparameters.

    ``rho``/``phi`` belong to the Dirichlet-Dirichlet prior, ``psi``/``tau`` to
    the Dirichlet-lognormal prior; ``alpha`` (intercept first) to both. Unused
    blocks are ``None``.
    """

    P: np.ndarray
    m: np.ndarray
    omega: float
    rho: Optional[float] = None
    phi: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None
    tau: Optional[float] = None
    n_alleles: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        self.P = np.array(self.P, dtype=float)
        self.m = np.array(self.m, dtype=float)
        self.omega = float(self.omega)
        for name in ("phi", "alpha", "psi"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.array(v, dtype=float))
        if self.n_alleles is None:
            self.n_alleles = tuple(int(x) for x in (self.P[:, 0, :] > 0).sum(axis=1))

    def copy(self):
        return replace(
            self,
            P=self.P.copy(),
            m=self.m.copy(),
            phi=None if self.phi is None else self.phi.copy(),
            alpha=None if self.alpha is None else self.alpha.copy(),
            psi=None if self.psi is None else self.psi.copy(),
        )

    @property
    def n_sources(self):
        return self.m.shape[0]
