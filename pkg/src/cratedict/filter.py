"""Approximate-membership filter built on the multiset dictionary.

Each element is hashed to a fingerprint in [ceil(n / epsilon)] and the
fingerprint is stored, with multiplicity, in a dictionary over that
universe.  A query answers yes iff the queried fingerprint is present, so
an inserted element can never be reported absent, and an absent element is
reported present only when its fingerprint collides with a stored one,
which happens with probability at most about epsilon.

Deletions remove one fingerprint copy.  Deleting an element that was never
inserted is outside the contract: if its fingerprint happens to be stored
the wrong copy silently disappears, and otherwise KeyError is raised.  The
filter cannot detect the first case; callers must only delete elements
they inserted.

The fingerprints are already uniform, so the underlying dictionary skips
its input permutation.
"""

from __future__ import annotations

from fractions import Fraction

from .core_bits import AccessMeter
from .envelope import pack_envelope, unpack_envelope
from .errors import ConfigError
from .hashing import derive_params, fingerprint, frac_ceil, hash_keys, mix_int


def _dict_class(mode: str):
    if mode == "dense":
        from .crate_dense import CrateDictDense
        return CrateDictDense
    from .crate_sparse import CrateDictSparse
    return CrateDictSparse


class CrateFilter:
    KIND = "filter"

    def __init__(self, n: int, epsilon, w_eff: int = 64,
                 seed: bytes = b"\x00" * 32, *, overrides: dict | None = None,
                 meter: AccessMeter | None = None):
        epsilon = Fraction(epsilon)
        if not 0 < epsilon < 1:
            raise ConfigError("epsilon must be in (0, 1)")
        self.epsilon = epsilon
        self.seed = bytes(seed)
        universe = frac_ceil(Fraction(n) / epsilon)
        params = derive_params(n, w_eff=w_eff, universe=universe,
                               overrides=overrides)
        self._dict = _dict_class(params.mode)(
            params, self.seed, permute=False, meter=meter,
            derive_inputs={"overrides": overrides})
        self._fp_keys = hash_keys(self.seed, b"fingerprint")
        self._fp_range = universe

    @property
    def params(self):
        return self._dict.params

    @property
    def mode(self) -> str:
        return self._dict.params.mode

    @property
    def meter(self):
        return self._dict.meter

    def _fp(self, x: int) -> int:
        # same value as hashing.fingerprint, with the subkey derived once
        k0, k1 = self._fp_keys
        return mix_int(x, k0, k1) % self._fp_range

    def __len__(self) -> int:
        return len(self._dict)

    def __contains__(self, x: int) -> bool:
        return self.query(x)

    def insert(self, x: int) -> None:
        self._dict.insert(self._fp(x))

    def delete(self, x: int) -> None:
        self._dict.delete(self._fp(x))

    def query(self, x: int) -> bool:
        return self._dict.query(self._fp(x)) > 0

    def check_invariants(self) -> None:
        self._dict.check_invariants()

    def space_report(self) -> dict:
        report = self._dict.space_report()
        report["epsilon"] = float(self.epsilon)
        report["fp_universe"] = self._fp_range
        return report

    def to_bytes(self) -> bytes:
        header = {
            "epsilon": [self.epsilon.numerator, self.epsilon.denominator],
            "dict_kind": self._dict.KIND,
        }
        return pack_envelope(self.KIND, header, [self._dict.to_bytes()])

    @classmethod
    def from_bytes(cls, raw: bytes, meter: AccessMeter | None = None):
        kind, header, blobs = unpack_envelope(raw)
        if kind != cls.KIND:
            raise ConfigError(f"container holds {kind!r}, expected {cls.KIND!r}")
        if len(blobs) != 1:
            raise ConfigError("container blob count does not match geometry")
        from .crate_dense import CrateDictDense
        from .crate_sparse import CrateDictSparse
        inner = {CrateDictDense.KIND: CrateDictDense,
                 CrateDictSparse.KIND: CrateDictSparse}
        if header["dict_kind"] not in inner:
            raise ConfigError(f"unknown inner kind {header['dict_kind']!r}")
        dictionary = inner[header["dict_kind"]].from_bytes(blobs[0], meter=meter)
        obj = cls.__new__(cls)
        obj.epsilon = Fraction(*header["epsilon"])
        obj.seed = dictionary.seed
        obj._dict = dictionary
        obj._fp_keys = hash_keys(obj.seed, b"fingerprint")
        obj._fp_range = dictionary.params.universe
        expected = frac_ceil(Fraction(dictionary.params.n) / obj.epsilon)
        if obj._fp_range != expected or dictionary.permute:
            raise ConfigError("inner dictionary does not match filter geometry")
        return obj


__all__ = ["CrateFilter", "fingerprint"]
