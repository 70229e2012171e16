"""Named, splittable random streams on a counter-based generator.

Every stochastic operation in the package takes an explicit stream, so a run
is fully determined by its seed. Streams split by label: the child key is a
hash of the parent key and the label, which makes derived streams independent
of draw order and cheap to re-create (e.g. per training step).
"""
from __future__ import annotations

import hashlib

import numpy as np

_CLIP_LO = 1e-10
_CLIP_HI = 1.0 - 1e-10


class RngStream:
    """A Philox-backed stream identified by a 128-bit key."""

    def __init__(self, seed: int | None = None, name: str = "root",
                 _key: bytes | None = None):
        if _key is None:
            if seed is None:
                raise ValueError("RngStream needs a seed or an explicit key")
            _key = hashlib.blake2b(f"{name}:{seed}".encode(), digest_size=16).digest()
        self.name = name
        self._key = _key
        self._bitgen = np.random.Philox(key=int.from_bytes(_key, "little"))
        self._gen = np.random.Generator(self._bitgen)

    def split(self, label: str) -> "RngStream":
        """Derive an independent child stream; same label, same child."""
        child = hashlib.blake2b(self._key + label.encode(), digest_size=16).digest()
        return RngStream(name=f"{self.name}/{label}", _key=child)

    # -- draws ------------------------------------------------------------

    def uniform(self, shape=None) -> np.ndarray:
        return self._gen.random(shape)

    def gumbel(self, shape=None) -> np.ndarray:
        """Standard Gumbel noise, u clamped away from {0,1} for finiteness."""
        u = np.clip(self._gen.random(shape), _CLIP_LO, _CLIP_HI)
        return -np.log(-np.log(u))

    def logistic(self, shape=None) -> np.ndarray:
        u = np.clip(self._gen.random(shape), _CLIP_LO, _CLIP_HI)
        return np.log(u) - np.log1p(-u)

    def integers(self, low: int, high: int | None = None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def bernoulli(self, p: float) -> bool:
        return bool(self._gen.random() < p)

    # -- serialization ----------------------------------------------------

    def get_state(self) -> dict:
        s = self._bitgen.state
        return {
            "name": self.name,
            "key": self._key.hex(),
            "counter": [int(x) for x in s["state"]["counter"]],
            "buffer": [int(x) for x in s["buffer"]],
            "buffer_pos": int(s["buffer_pos"]),
            "has_uint32": int(s["has_uint32"]),
            "uinteger": int(s["uinteger"]),
        }

    @classmethod
    def from_state(cls, d: dict) -> "RngStream":
        stream = cls(name=d["name"], _key=bytes.fromhex(d["key"]))
        s = stream._bitgen.state
        s["state"]["counter"] = np.array(d["counter"], dtype=np.uint64)
        s["buffer"] = np.array(d["buffer"], dtype=np.uint64)
        s["buffer_pos"] = d["buffer_pos"]
        s["has_uint32"] = d["has_uint32"]
        s["uinteger"] = d["uinteger"]
        stream._bitgen.state = s
        return stream

    def __repr__(self) -> str:
        return f"RngStream({self.name!r})"
