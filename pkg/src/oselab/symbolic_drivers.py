"""Two-sided symbol sequences that select the generator at each step.

Symbols are 1-based integers.  The shift acts on the left,
``(sigma omega)_i = omega_{i+1}``, so a driver evaluated at ``sigma^k omega``
is the same driver queried at shifted indices.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import mpmath
import numpy as np

__all__ = [
    "THETA_E",
    "THETA_CLASSES",
    "AnchorMismatch",
    "NondeterministicLift",
    "Driver",
    "PeriodicDriver",
    "ExplicitDriver",
    "SftLiftDriver",
    "BitSource",
    "pi_fraction_bits",
    "pi_bit_source",
    "lift_h_inverse",
    "omega_star",
    "check_admissible",
    "driver_from_spec",
]

# Transition matrix of the six-symbol subshift; E[i-1, j-1] = 1 allows i -> j.
THETA_E = np.array(
    [
        [0, 1, 0, 0, 1, 0],
        [0, 0, 1, 0, 0, 1],
        [1, 0, 0, 1, 0, 0],
        [0, 0, 1, 0, 0, 1],
        [1, 0, 0, 1, 0, 0],
        [0, 1, 0, 0, 1, 0],
    ],
    dtype=np.int64,
)
# factor map onto the full 2-shift: symbols 1..3 -> 0, 4..6 -> 1
THETA_CLASSES = {1: 0, 2: 0, 3: 0, 4: 1, 5: 1, 6: 1}


class AnchorMismatch(ValueError):
    pass


class NondeterministicLift(ValueError):
    pass


class Driver:
    """Base class: ``symbol_at(i)`` for every integer ``i``."""

    alphabet: tuple[int, ...] = ()

    def symbol_at(self, i: int) -> int:
        raise NotImplementedError

    def window(self, start: int, stop: int) -> list[int]:
        return [self.symbol_at(i) for i in range(start, stop)]

    def __getitem__(self, i: int) -> int:
        return self.symbol_at(i)


@dataclass(frozen=True)
class PeriodicDriver(Driver):
    word: tuple[int, ...]

    def __post_init__(self):
        if not self.word:
            raise ValueError("periodic word must be nonempty")
        object.__setattr__(self, "word", tuple(int(s) for s in self.word))

    @property
    def period(self) -> int:
        return len(self.word)

    @property
    def alphabet(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.word)))

    def symbol_at(self, i: int) -> int:
        return self.word[i % len(self.word)]


@dataclass(frozen=True)
class ExplicitDriver(Driver):
    """Finite explicit window; ``symbols[0]`` sits at index ``origin``."""

    symbols: tuple[int, ...]
    origin: int = 0

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))

    @property
    def alphabet(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.symbols)))

    def symbol_at(self, i: int) -> int:
        k = i - self.origin
        if not 0 <= k < len(self.symbols):
            raise IndexError(f"explicit driver defined on [{self.origin}, {self.origin + len(self.symbols)}), queried at {i}")
        return self.symbols[k]


class BitSource:
    """Bit sequence over the integers backed by a lazily grown prefix.

    ``bit(i)`` returns ``prefix_fn(n)[i - start]`` for ``i >= start`` and
    ``fill`` below ``start``.  ``transform`` post-processes every stored bit.
    """

    def __init__(self, prefix_fn: Callable[[int], Sequence[int]], start: int = 0, fill: int = 0,
                 transform: Callable[[int], int] | None = None):
        self._prefix_fn = prefix_fn
        self.start = start
        self.fill = fill
        self._transform = transform
        self._bits: list[int] = []
        self._lock = threading.Lock()

    def bit(self, i: int) -> int:
        k = i - self.start
        if k < 0:
            return self.fill
        if k >= len(self._bits):
            with self._lock:
                if k >= len(self._bits):
                    n = max(2 * len(self._bits), k + 1, 256)
                    raw = self._prefix_fn(n)
                    self._bits = [self._transform(b) if self._transform else int(b) for b in raw]
        return self._bits[k]

    __call__ = bit


def pi_fraction_bits(n: int) -> list[int]:
    """First ``n`` binary digits of the fractional part of pi."""
    if n < 1:
        raise ValueError("n must be >= 1")
    # 64 guard bits beyond the request
    with mpmath.workprec(n + 64):
        frac = mpmath.pi - 3
        scaled = int(mpmath.floor(frac * mpmath.mpf(2) ** n))
    return [int(c) for c in format(scaled, f"0{n}b")]


def pi_bit_source(*, complement: bool = False) -> BitSource:
    """Pi's fractional bits indexed from 1, zero at indices <= 0.

    With ``complement=True`` stored bits are flipped (the binary digits of
    ``1 - frac(pi)``); indices <= 0 stay zero.
    """
    return BitSource(pi_fraction_bits, start=1, fill=0,
                     transform=(lambda b: 1 - b) if complement else None)


def _check_deterministic(E: np.ndarray, classes: Mapping[int, int]) -> None:
    K = E.shape[0]
    labels = set(classes.values())
    for s in range(1, K + 1):
        for c in labels:
            succ = [t for t in range(1, K + 1) if E[s - 1, t - 1] and classes[t] == c]
            pred = [t for t in range(1, K + 1) if E[t - 1, s - 1] and classes[t] == c]
            if len(succ) != 1 or len(pred) != 1:
                raise NondeterministicLift(
                    f"symbol {s}: {len(succ)} successors and {len(pred)} predecessors in class {c}"
                )


class SftLiftDriver(Driver):
    """The unique admissible lift of a bit sequence through the class map.

    ``symbol_at(i)`` has class ``bits(i + shift)`` and ``symbol_at(0) == anchor``.
    Symbols are memoised in both directions from the anchor.
    """

    def __init__(self, E: np.ndarray, classes: Mapping[int, int], bits: Callable[[int], int],
                 shift: int = 0, anchor: int = 1):
        E = np.asarray(E, dtype=np.int64)
        _check_deterministic(E, classes)
        if classes[anchor] != bits(shift):
            raise AnchorMismatch(
                f"anchor {anchor} has class {classes[anchor]} but bit {shift} is {bits(shift)}"
            )
        self.E = E
        self.classes = dict(classes)
        self.bits = bits
        self.shift = shift
        self.anchor = anchor
        K = E.shape[0]
        self.alphabet = tuple(range(1, K + 1))
        self._succ = {(s, c): t for s in self.alphabet for t in self.alphabet
                      for c in (self.classes[t],) if E[s - 1, t - 1]}
        self._pred = {(s, c): t for s in self.alphabet for t in self.alphabet
                      for c in (self.classes[t],) if E[t - 1, s - 1]}
        self._fwd = [anchor]   # indices 0, 1, 2, ...
        self._bwd: list[int] = []  # indices -1, -2, ...
        self._lock = threading.Lock()

    def symbol_at(self, i: int) -> int:
        if i >= 0:
            if i >= len(self._fwd):
                with self._lock:
                    while len(self._fwd) <= i:
                        k = len(self._fwd)
                        self._fwd.append(self._succ[self._fwd[-1], self.bits(k + self.shift)])
            return self._fwd[i]
        j = -i - 1
        if j >= len(self._bwd):
            with self._lock:
                while len(self._bwd) <= j:
                    k = -len(self._bwd) - 1
                    nxt = self._bwd[-1] if self._bwd else self._fwd[0]
                    self._bwd.append(self._pred[nxt, self.bits(k + self.shift)])
        return self._bwd[j]

    def class_at(self, i: int) -> int:
        return self.classes[self.symbol_at(i)]


def lift_h_inverse(E, bits: Callable[[int], int], shift: int, anchor: int,
                   classes: Mapping[int, int] = THETA_CLASSES) -> SftLiftDriver:
    return SftLiftDriver(E, classes, bits, shift=shift, anchor=anchor)


def omega_star(shift: int = 120, anchor: int = 1) -> SftLiftDriver:
    """The pi-driven test sequence of the six-map example.

    The lifted bits are the complemented fractional binary digits of pi,
    indexed from 1 and zero at indices <= 0.  Under this reading the window
    at indices -9..9 is ``5,4,6,2,3,1,5,4,3,[1],5,1,5,4,6,2,6,5,1`` and the
    far past settles into ``...,1,2,3,1,2,3,4,...``.
    """
    return lift_h_inverse(THETA_E, pi_bit_source(complement=True), shift, anchor)


def check_admissible(E, word: Sequence[int]) -> bool:
    E = np.asarray(E)
    return all(E[a - 1, b - 1] == 1 for a, b in zip(word, word[1:]))


def driver_from_spec(spec: Mapping) -> Driver:
    """``{"type": "periodic" | "pi_sft" | "explicit", ...}`` -> Driver."""
    kind = spec.get("type")
    if kind == "periodic":
        return PeriodicDriver(tuple(spec["word"]))
    if kind == "pi_sft":
        return omega_star(int(spec.get("shift", 120)), int(spec.get("anchor", 1)))
    if kind == "explicit":
        return ExplicitDriver(tuple(spec["symbols"]), int(spec.get("origin", 0)))
    raise ValueError(f"unknown driver type {kind!r}")
