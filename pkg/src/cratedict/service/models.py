"""Request and response models for the HTTP service.

Element values and universe sizes are arbitrary-precision integers; JSON
carries them exactly, so the models use plain ``int`` fields throughout.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

DENSE_REFERENCE = {"n": 1 << 16, "rho": 1 << 10, "w_eff": 1024}
SPARSE_REFERENCE = {"n": 1 << 12, "rho": 1 << 70, "w_eff": 64}


class DictCreate(BaseModel):
    n: int = Field(ge=1)
    rho: int | float | None = None
    universe: int | None = Field(default=None, ge=2)
    w_eff: int = 64
    seed: int | None = None
    permute: bool = True
    overrides: dict[str, int] | None = None
    metered: bool = True


class FilterCreate(BaseModel):
    n: int = Field(ge=1)
    epsilon: float = Field(gt=0, lt=1)
    w_eff: int = 64
    seed: int | None = None
    metered: bool = True


class RetrievalCreate(BaseModel):
    keys: list[int]
    labels: list[int]
    k: int | None = Field(default=None, ge=1)
    w_eff: int = 64
    seed: int | None = None
    retries: int = Field(default=16, ge=1)
    metered: bool = True


class ElementOp(BaseModel):
    x: int


class LabelUpdate(BaseModel):
    x: int
    label: int = Field(ge=0)


class Created(BaseModel):
    id: str
    kind: str
    info: dict


class CountResult(BaseModel):
    count: int


class MemberResult(BaseModel):
    member: bool


class LabelResult(BaseModel):
    label: int


class LiveResult(BaseModel):
    live: int


class OkResult(BaseModel):
    ok: bool = True


class DiffTestRequest(BaseModel):
    layout: Literal["dense", "sparse"] = "dense"
    ops: int = Field(default=100_000, ge=1)
    seed: int = 0
    mode: Literal["set", "multiset"] = "multiset"
    n: int | None = None
    rho: int | float | None = None
    universe: int | None = None
    w_eff: int | None = None
    overrides: dict[str, int] | None = None
    invariants_every: int | None = Field(default=None, ge=1)
    minimality_every: int | None = Field(default=None, ge=1)
    weights: tuple[int, int, int] = (2, 1, 1)


class FpRateRequest(BaseModel):
    n: int = Field(default=1 << 14, ge=1)
    epsilon: float = Field(default=2 ** -6, gt=0, lt=1)
    queries: int = Field(default=100_000, ge=1)
    seeds: int = Field(default=10, ge=1)
    w_eff: int = 64


class SpaceAuditRequest(BaseModel):
    n: int = Field(ge=1)
    rho: int | float | None = None
    universe: int | None = None
    w_eff: int = 64
    fill: int | None = Field(default=None, ge=0)


class AccessTraceRequest(BaseModel):
    n: int = Field(ge=1)
    rho: int | float | None = None
    universe: int | None = None
    w_eff: int = 64
    ops: int = Field(default=100_000, ge=1)
    seed: int = 0
    prologue: bool = True
    weights: tuple[int, int, int] = (2, 1, 1)


class RetrievalRequest(BaseModel):
    n: int = Field(ge=1)
    k: int = Field(ge=1, le=4096)
    seed: int = 0
    w_eff: int = 64
    retries: int = Field(default=16, ge=1)
