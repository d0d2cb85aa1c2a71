"""Domain-private and shared affine projections over encoder features."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .corpus import DomainId
from .numerics import Tensor
from .numerics.init import xavier_uniform_init

SHARED = "shared"


class UnknownDomainError(KeyError):
    def __init__(self, domain: str, known: Sequence[str]):
        super().__init__(domain)
        self.domain = domain
        self.known = list(known)

    def __str__(self) -> str:
        return f"unknown domain {self.domain!r}; known domains: {', '.join(self.known) or '(none)'}"


def _name(domain) -> str:
    return domain.name if isinstance(domain, DomainId) else str(domain)


def init_projection_params(
    domains: Sequence[str], d_h: int, seed: int, shared: bool = True, dtype=np.float64
) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    names = list(domains) + ([SHARED] if shared else [])
    for d in domains:
        if d == SHARED:
            raise ValueError(f"{SHARED!r} is reserved and cannot name a domain")
    for d in names:
        params[f"proj.{d}.W"] = Tensor(xavier_uniform_init((d_h, d_h), seed, dtype, f"proj.{d}.W"), requires_grad=True)
        params[f"proj.{d}.b"] = Tensor(np.zeros(d_h, dtype=dtype), requires_grad=True)
    return params


def projected_domains(params: dict[str, Tensor]) -> list[str]:
    return sorted({k.split(".")[1] for k in params if k.startswith("proj.") and k.split(".")[1] != SHARED})


def has_shared(params: dict[str, Tensor]) -> bool:
    return f"proj.{SHARED}.W" in params


def _affine(h: Tensor, params: dict[str, Tensor], key: str) -> Tensor:
    return h @ params[f"proj.{key}.W"] + params[f"proj.{key}.b"]


def project(h: Tensor, domain, params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """(domain-specific, shared) representations of ``h``.

    Without shared parameters (single-criteria models) the private
    representation fills both slots.
    """
    name = _name(domain)
    if name == SHARED or f"proj.{name}.W" not in params:
        raise UnknownDomainError(name, projected_domains(params))
    h_domain = _affine(h, params, name)
    if not has_shared(params):
        return h_domain, h_domain
    return h_domain, _affine(h, params, SHARED)


def project_shared_only(h: Tensor, params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Shared representation in both slots; no private parameters are touched."""
    if not has_shared(params):
        raise UnknownDomainError(SHARED, projected_domains(params))
    h_shared = _affine(h, params, SHARED)
    return h_shared, h_shared
