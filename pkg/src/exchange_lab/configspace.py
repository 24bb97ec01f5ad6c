"""Full and reduced configuration space of N identical particles in d dimensions.

Conventions
-----------
Particle indices are 0-based. A configuration is an ``(N, d)`` array of
positions; a point of a :class:`ConfigGrid` is addressed by a tuple of
``D = N * d`` indices, ordered particle-major (all components of particle 0,
then particle 1, ...).

``permute(c, sigma)`` places input block ``sigma(i)`` in output slot ``i``.
With that action, permuting by ``sigma`` and then by ``tau`` equals a single
permutation by ``tau @ sigma`` (see :meth:`Permutation.__matmul__`).
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

MAX_CONFIG_DIM = 4
MIN_POINTS = 8


class ConfigSpaceError(ValueError):
    """Invalid configuration, permutation or grid."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Permutation:
    """A bijection on ``{0, ..., n-1}`` stored as the image tuple."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(i) for i in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise ConfigSpaceError(f"not a bijection: {self.mapping}")
        object.__setattr__(self, "mapping", m)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def transposition(cls, n: int, i: int, j: int) -> "Permutation":
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ConfigSpaceError(f"bad transposition ({i}, {j}) on {n} elements")
        m = list(range(n))
        m[i], m[j] = j, i
        return cls(tuple(m))

    @classmethod
    def cycle(cls, n: int, elements: Sequence[int]) -> "Permutation":
        """Cycle sending ``elements[k]`` to ``elements[k+1]``."""
        m = list(range(n))
        for a, b in zip(elements, list(elements[1:]) + [elements[0]]):
            m[a] = b
        return cls(tuple(m))

    @property
    def n(self) -> int:
        return len(self.mapping)

    def __call__(self, i: int) -> int:
        return self.mapping[i]

    def __len__(self) -> int:
        return len(self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for i, j in enumerate(self.mapping):
            inv[j] = i
        return Permutation(tuple(inv))

    def __matmul__(self, other: "Permutation") -> "Permutation":
        """``tau @ sigma``: the permutation equivalent to permuting by sigma, then by tau.

        As maps on indices this is ``i -> sigma(tau(i))`` because the action
        on configurations pulls indices back.
        """
        if other.n != self.n:
            raise ConfigSpaceError("size mismatch in composition")
        return Permutation(tuple(other.mapping[self.mapping[i]] for i in range(self.n)))

    def cycles(self) -> list[tuple[int, ...]]:
        seen = set()
        out = []
        for start in range(self.n):
            if start in seen:
                continue
            cyc = []
            i = start
            while i not in seen:
                seen.add(i)
                cyc.append(i)
                i = self.mapping[i]
            out.append(tuple(cyc))
        return out

    @property
    def parity(self) -> int:
        """0 for even, 1 for odd."""
        return sum(len(c) - 1 for c in self.cycles()) % 2

    @property
    def sign(self) -> int:
        return -1 if self.parity else 1

    def is_identity(self) -> bool:
        return self.mapping == tuple(range(self.n))


def all_permutations(n: int) -> list[Permutation]:
    return [Permutation(p) for p in itertools.permutations(range(n))]


def transpositions(n: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n), 2))


@dataclass(frozen=True, eq=False)
class ParticleConfig:
    """Ordered positions of N particles, shape ``(N, d)``.

    ``box`` optionally holds ``(lo, hi)`` per spatial axis; positions outside
    it are rejected.
    """

    positions: np.ndarray
    box: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ConfigSpaceError(f"positions must be (N, d), got {pos.shape}")
        if pos.shape[1] not in (1, 2, 3):
            raise ConfigSpaceError(f"spatial dimension must be 1, 2 or 3, got {pos.shape[1]}")
        if self.box is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.box)
            if np.any(pos < lo) or np.any(pos > hi):
                raise ConfigSpaceError("position outside simulation box")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def flat(self) -> np.ndarray:
        return self.positions.reshape(-1)

    @classmethod
    def from_flat(cls, x, d: int, box=None) -> "ParticleConfig":
        x = np.asarray(x, dtype=float)
        return cls(x.reshape(-1, d), box)

    def __eq__(self, other):
        if not isinstance(other, ParticleConfig):
            return NotImplemented
        return self.positions.shape == other.positions.shape and np.array_equal(
            self.positions, other.positions
        )

    def __hash__(self):
        return hash((self.positions.shape, self.positions.tobytes()))

    def __repr__(self):
        return f"ParticleConfig({self.positions.tolist()})"


def permute(config: ParticleConfig, sigma: Permutation) -> ParticleConfig:
    """Output slot ``i`` holds input block ``sigma(i)``."""
    if sigma.n != config.N:
        raise ConfigSpaceError(f"permutation on {sigma.n} elements, config has {config.N}")
    return ParticleConfig(config.positions[list(sigma.mapping)], config.box)


def orbit(config: ParticleConfig) -> list[ParticleConfig]:
    """All distinct permuted images, in first-seen order over ``itertools.permutations``."""
    seen = {}
    for p in itertools.permutations(range(config.N)):
        img = config.positions[list(p)]
        key = img.tobytes()
        if key not in seen:
            seen[key] = ParticleConfig(img, config.box)
    return list(seen.values())


def to_cm_rel(config: ParticleConfig) -> tuple[np.ndarray, np.ndarray]:
    """Centre of mass ``(x1 + x2) / 2`` and relative coordinate ``x2 - x1``."""
    if config.N != 2:
        raise ConfigSpaceError("centre-of-mass/relative split needs exactly 2 particles")
    x1, x2 = config.positions
    return (x1 + x2) / 2, x2 - x1


def from_cm_rel(x_cm, x_rel, box=None) -> ParticleConfig:
    x_cm = np.atleast_1d(np.asarray(x_cm, dtype=float))
    x_rel = np.atleast_1d(np.asarray(x_rel, dtype=float))
    return ParticleConfig(np.stack([x_cm - x_rel / 2, x_cm + x_rel / 2]), box)


@dataclass(frozen=True)
class ReducedPoint:
    representative: ParticleConfig
    orbit_size: int


def canonical_order(positions: np.ndarray) -> np.ndarray:
    """Indices sorting particle blocks lexicographically (axis 0 compared first)."""
    positions = np.asarray(positions)
    keys = tuple(positions[:, c] for c in reversed(range(positions.shape[1])))
    return np.lexsort(keys)


def canonicalize(config: ParticleConfig) -> ReducedPoint:
    rep = config.positions[canonical_order(config.positions)]
    counts = Counter(row.tobytes() for row in rep)
    size = math.factorial(config.N)
    for c in counts.values():
        size //= math.factorial(c)
    return ReducedPoint(ParticleConfig(rep, config.box), size)


@dataclass(frozen=True, eq=False)
class ConfigGrid:
    """Uniform grid over the configuration space of ``n_particles`` identical particles.

    ``lo``, ``hi`` and ``points`` are given per *spatial* axis and shared by all
    particles, which makes the grid permutation-compatible by construction.
    Periodic grids exclude the upper endpoint.
    """

    n_particles: int
    dim: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    points: tuple[int, ...]
    periodic: bool = True
    _axes: tuple = field(init=False, repr=False)

    def __post_init__(self):
        def per_axis(v, cast):
            v = tuple(cast(x) for x in np.atleast_1d(v))
            if len(v) == 1:
                v = v * self.dim
            if len(v) != self.dim:
                raise ConfigSpaceError(f"expected {self.dim} per-axis values, got {len(v)}")
            return v

        if self.n_particles < 1 or self.dim not in (1, 2, 3):
            raise ConfigSpaceError("need N >= 1 and d in {1, 2, 3}")
        object.__setattr__(self, "lo", per_axis(self.lo, float))
        object.__setattr__(self, "hi", per_axis(self.hi, float))
        object.__setattr__(self, "points", per_axis(self.points, int))
        if self.D > MAX_CONFIG_DIM:
            raise ConfigSpaceError(f"configuration dimension {self.D} exceeds {MAX_CONFIG_DIM}")
        if min(self.points) < MIN_POINTS:
            raise ConfigSpaceError(f"need at least {MIN_POINTS} points per axis")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ConfigSpaceError("empty axis range")
        spatial = [
            np.linspace(l, h, n, endpoint=not self.periodic)
            for l, h, n in zip(self.lo, self.hi, self.points)
        ]
        for a in spatial:
            a.setflags(write=False)
        object.__setattr__(self, "_axes", tuple(spatial))

    @property
    def D(self) -> int:
        return self.n_particles * self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points * self.n_particles

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spatial_axes(self) -> tuple[np.ndarray, ...]:
        return self._axes

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return self._axes * self.n_particles

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(float(a[1] - a[0]) for a in self.axes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def particle_axes(self, k: int) -> range:
        return range(k * self.dim, (k + 1) * self.dim)

    def axis_permutation(self, sigma: Permutation) -> list[int]:
        """Axes order for ``np.transpose`` so that ``out[c] = arr[permute(c, sigma)]``."""
        if sigma.n != self.n_particles:
            raise ConfigSpaceError("permutation size does not match particle count")
        d = self.dim
        axes = [0] * self.D
        for i in range(self.n_particles):
            for c in range(d):
                axes[sigma(i) * d + c] = i * d + c
        return axes

    def permute_indices(self, idx: Sequence[int], sigma: Permutation) -> tuple[int, ...]:
        blocks = [tuple(idx[k * self.dim:(k + 1) * self.dim]) for k in range(self.n_particles)]
        return tuple(v for i in range(self.n_particles) for v in blocks[sigma(i)])

    def point(self, idx: Sequence[int]) -> ParticleConfig:
        flat = [ax[i] for ax, i in zip(self.axes, idx)]
        return ParticleConfig.from_flat(flat, self.dim)

    def iter_indices(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(n) for n in self.shape))

    def box(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        return self.lo, self.hi

    def contains(self, flat_points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(flat_points).reshape(-1, self.n_particles, self.dim)
        lo, hi = np.array(self.lo), np.array(self.hi)
        return np.all((p >= lo) & (p <= hi), axis=(1, 2))

    def canonical_mask(self) -> np.ndarray:
        """True where the grid point is its own lexicographic orbit representative."""
        if self.n_particles == 1:
            return np.ones(self.shape, dtype=bool)
        idx = np.indices(self.shape)
        blocks = [idx[self.particle_axes(k)] for k in range(self.n_particles)]
        mask = np.ones(self.shape, dtype=bool)
        for k in range(self.n_particles - 1):
            mask &= _lex_le(blocks[k], blocks[k + 1])
        return mask

    def to_dict(self) -> dict:
        return {
            "n_particles": self.n_particles,
            "dim": self.dim,
            "lo": list(self.lo),
            "hi": list(self.hi),
            "points": list(self.points),
            "periodic": self.periodic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConfigGrid":
        return cls(
            int(d["n_particles"]),
            int(d["dim"]),
            tuple(d["lo"]),
            tuple(d["hi"]),
            tuple(d["points"]),
            bool(d.get("periodic", True)),
        )

    def __eq__(self, other):
        if not isinstance(other, ConfigGrid):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))


def _lex_le(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise lexicographic ``a <= b`` over the leading (component) axis."""
    result = np.ones(a.shape[1:], dtype=bool)
    decided = np.zeros(a.shape[1:], dtype=bool)
    for c in range(a.shape[0]):
        lt = (a[c] < b[c]) & ~decided
        gt = (a[c] > b[c]) & ~decided
        result[gt] = False
        decided |= lt | gt
    return result
