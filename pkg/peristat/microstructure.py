"""
Random particle-reinforced RVE geometry.

Particles are ellipses (2D) or ellipsoids (3D) placed by random sequential
addition inside the cell ``[0, side_length]^dim``. Overlap is rejected with the
circumscribing circle/sphere test and containment with the exact axis-aligned
extent of the rotated particle.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation

from peristat.base import defaults
from peristat.base.exceptions import ConfigError, PlacementFailure
from peristat.base.utils import check_dimension, sample_rng

logger = logging.getLogger(__name__)


class Phase(Enum):
    MATRIX = 0
    PARTICLE = 1


@dataclass(frozen=True)
class ParticleGeometry:
    dim: int
    semi_axes: Tuple[float, ...]
    center: Tuple[float, ...]
    orientation: Tuple[float, ...]

    def __post_init__(self):
        check_dimension(self.dim)
        n_angles = 1 if self.dim == 2 else 3
        if len(self.semi_axes) != self.dim or len(self.center) != self.dim:
            raise ValueError("semi_axes and center need {} entries".format(self.dim))
        if len(self.orientation) != n_angles:
            raise ValueError("orientation needs {} angles".format(n_angles))
        if min(self.semi_axes) <= 0.0:
            raise ValueError("semi axes must be positive")
        if any(not 0.0 <= a < defaults.FULL_TURN for a in self.orientation):
            raise ValueError("orientation angles must lie in [0, 2pi)")

    def rotation(self):
        """
        :return: matrix whose columns are the particle axes in the cell frame
        """
        if self.dim == 2:
            c, s = math.cos(self.orientation[0]), math.sin(self.orientation[0])
            return np.array([[c, -s], [s, c]])
        return Rotation.from_euler("zxz", self.orientation).as_matrix()

    @property
    def circumradius(self):
        return max(self.semi_axes)

    def half_extents(self):
        scaled = self.rotation() * np.asarray(self.semi_axes)[None, :]
        return np.sqrt(np.sum(scaled ** 2, axis=1))

    def measure(self):
        return particle_measure(self.semi_axes)

    def contains(self, points):
        """
        :param points: (n, dim) coordinates
        :return: boolean mask, True where the quadratic form is <= 1
        """
        points = np.atleast_2d(points)
        local = (points - np.asarray(self.center)) @ self.rotation()
        return np.sum((local / np.asarray(self.semi_axes)) ** 2, axis=1) <= 1.0

    def to_dict(self):
        return {
            "semi_axes": list(self.semi_axes),
            "center": list(self.center),
            "orientation": list(self.orientation),
        }


def particle_measure(semi_axes):
    if len(semi_axes) == 2:
        return math.pi * semi_axes[0] * semi_axes[1]
    return 4.0 / 3.0 * math.pi * semi_axes[0] * semi_axes[1] * semi_axes[2]


def _uniform_moment(lo, hi, k):
    if hi == lo:
        return lo ** k
    return (hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * (hi - lo))


@dataclass
class DistributionSpec:
    """
    Probability laws of the particle parameters

    Sizes, centres and angles are uniform. Exactly one of ``count`` and
    ``volume_fraction`` selects the number of particles.
    """
    dim: int = 2
    side_length: float = defaults.RVE_SIDE_LENGTH
    semi_axis_ranges: Sequence[Tuple[float, float]] = (
        (defaults.PARTICLE_RADIUS, defaults.PARTICLE_RADIUS),
        (defaults.PARTICLE_RADIUS, defaults.PARTICLE_RADIUS),
    )
    equal_axes: bool = True
    orientation_range: Tuple[float, float] = (0.0, defaults.FULL_TURN)
    volume_fraction: Optional[float] = defaults.VOLUME_FRACTION
    count: Optional[int] = None
    seed: int = defaults.SEED
    max_attempts: int = defaults.MAX_PLACEMENT_ATTEMPTS

    def validate(self):
        check_dimension(self.dim)
        if self.side_length <= 0.0:
            raise ConfigError("must be positive", "side_length")
        if len(self.semi_axis_ranges) != self.dim:
            raise ConfigError("needs one range per axis", "semi_axis_ranges")
        for lo, hi in self.semi_axis_ranges:
            if lo <= 0.0 or hi < lo:
                raise ConfigError("empty or non-positive range ({}, {})".format(lo, hi), "semi_axis_ranges")
        lo, hi = self.orientation_range
        if lo < 0.0 or hi > defaults.FULL_TURN or hi < lo:
            raise ConfigError("must lie within [0, 2pi]", "orientation_range")
        if (self.count is None) == (self.volume_fraction is None):
            raise ConfigError("give exactly one of count and volume_fraction", "count")
        if self.count is not None and self.count < 0:
            raise ConfigError("must be non-negative", "count")
        if self.volume_fraction is not None and not 0.0 <= self.volume_fraction < defaults.JAMMING_FRACTION:
            raise ConfigError("must lie in [0, {})".format(defaults.JAMMING_FRACTION), "volume_fraction")
        if 2.0 * max(hi for _, hi in self.semi_axis_ranges) >= self.side_length:
            raise ConfigError("largest particle does not fit in the cell", "semi_axis_ranges")
        if self.max_attempts < 1:
            raise ConfigError("must be positive", "max_attempts")
        return self

    @property
    def cell_measure(self):
        return self.side_length ** self.dim

    def mean_particle_measure(self):
        factor = math.pi if self.dim == 2 else 4.0 / 3.0 * math.pi
        if self.equal_axes:
            lo, hi = self.semi_axis_ranges[0]
            return factor * _uniform_moment(lo, hi, self.dim)
        return factor * float(np.prod([_uniform_moment(lo, hi, 1) for lo, hi in self.semi_axis_ranges]))

    def target_count(self):
        if self.count is not None:
            return int(self.count)
        return int(round(self.volume_fraction * self.cell_measure / self.mean_particle_measure()))

    def to_dict(self):
        return {
            "dim": self.dim,
            "side_length": self.side_length,
            "semi_axis_ranges": [list(r) for r in self.semi_axis_ranges],
            "equal_axes": self.equal_axes,
            "orientation_range": list(self.orientation_range),
            "volume_fraction": self.volume_fraction,
            "count": self.count,
            "seed": self.seed,
            "max_attempts": self.max_attempts,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["semi_axis_ranges"] = tuple(tuple(r) for r in data["semi_axis_ranges"])
        data["orientation_range"] = tuple(data.get("orientation_range", (0.0, defaults.FULL_TURN)))
        return cls(**data)


@dataclass
class RveSample:
    sample_index: int
    side_length: float
    dim: int
    seed: int
    particles: List[ParticleGeometry] = field(default_factory=list)
    volume_fraction: float = 0.0
    target_fraction: Optional[float] = None

    @property
    def cell_measure(self):
        return self.side_length ** self.dim

    def particle_mask(self, points):
        """
        vectorised phase query

        :param points: (n, dim) coordinates in the cell
        :return: boolean mask, True inside any particle
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        mask = np.zeros(len(points), dtype=bool)
        for particle in self.particles:
            lo = np.asarray(particle.center) - particle.half_extents()
            hi = np.asarray(particle.center) + particle.half_extents()
            candidates = np.flatnonzero(~mask & np.all((points >= lo) & (points <= hi), axis=1))
            if candidates.size:
                mask[candidates] = particle.contains(points[candidates])
        return mask

    def to_dict(self):
        return {
            "sample_index": self.sample_index,
            "side_length": self.side_length,
            "dim": self.dim,
            "seed": self.seed,
            "volume_fraction": self.volume_fraction,
            "target_fraction": self.target_fraction,
            "particles": [p.to_dict() for p in self.particles],
        }

    @classmethod
    def from_dict(cls, data):
        dim = data["dim"]
        particles = [
            ParticleGeometry(dim, tuple(p["semi_axes"]), tuple(p["center"]), tuple(p["orientation"]))
            for p in data["particles"]
        ]
        return cls(
            sample_index=data["sample_index"],
            side_length=data["side_length"],
            dim=dim,
            seed=data["seed"],
            particles=particles,
            volume_fraction=data["volume_fraction"],
            target_fraction=data.get("target_fraction"),
        )

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps() + "\n")
        return path

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dataframe(self):
        """
        one row per particle: centre, semi axes and angles
        """
        axes = "xyz"[:self.dim]
        angles = ["psi"] if self.dim == 2 else ["psi1", "psi2", "psi3"]
        columns = (["center_" + a for a in axes] + ["semi_axis_" + a for a in "abc"[:self.dim]] + angles)
        rows = [list(p.center) + list(p.semi_axes) + list(p.orientation) for p in self.particles]
        return pd.DataFrame(rows, columns=columns)


def phase_at(rve: RveSample, point) -> Phase:
    """
    :param rve: sample geometry
    :param point: coordinates inside the cell
    :return: Phase.PARTICLE inside any particle, Phase.MATRIX otherwise
    """
    if rve.particle_mask(np.asarray(point, dtype=float)[None, :])[0]:
        return Phase.PARTICLE
    return Phase.MATRIX


def _draw_semi_axes(spec, rng):
    if spec.equal_axes:
        lo, hi = spec.semi_axis_ranges[0]
        return (float(rng.uniform(lo, hi)),) * spec.dim
    return tuple(float(rng.uniform(lo, hi)) for lo, hi in spec.semi_axis_ranges)


def _draw_orientation(spec, rng):
    lo, hi = spec.orientation_range
    n_angles = 1 if spec.dim == 2 else 3
    return tuple(float(rng.uniform(lo, hi)) % defaults.FULL_TURN for _ in range(n_angles))


def generate_rve(spec: DistributionSpec, m: int) -> RveSample:
    """
    random sequential addition of non-overlapping, fully contained particles

    :param spec: distribution laws and seed
    :param m: sample index, combined with the seed for an independent stream
    :return: RveSample
    """
    spec.validate()
    rng = sample_rng(spec.seed, m)
    n_target = spec.target_count()
    side = spec.side_length

    particles = []
    centers = np.empty((0, spec.dim))
    radii = np.empty(0)
    placed_measure = 0.0
    for k in range(n_target):
        semi_axes = _draw_semi_axes(spec, rng)
        for attempt in range(spec.max_attempts):
            orientation = _draw_orientation(spec, rng)
            candidate = ParticleGeometry(spec.dim, semi_axes, (0.0,) * spec.dim, orientation)
            extents = candidate.half_extents()
            center = rng.uniform(extents, side - extents)
            if np.any(center - extents <= 0.0) or np.any(center + extents >= side):
                continue
            radius = candidate.circumradius
            if radii.size and np.any(np.linalg.norm(centers - center, axis=1) <= radii + radius):
                continue
            particles.append(ParticleGeometry(spec.dim, semi_axes, tuple(float(c) for c in center), orientation))
            centers = np.vstack([centers, center])
            radii = np.append(radii, radius)
            placed_measure += candidate.measure()
            break
        else:
            raise PlacementFailure(
                "sample {}: particle {} of {} not placed after {} attempts".format(
                    m, k + 1, n_target, spec.max_attempts),
                placed_measure / spec.cell_measure,
            )

    rve = RveSample(
        sample_index=m,
        side_length=side,
        dim=spec.dim,
        seed=spec.seed,
        particles=particles,
        volume_fraction=placed_measure / spec.cell_measure,
        target_fraction=spec.volume_fraction,
    )
    logger.debug("sample %d: %d particles, volume fraction %.4f", m, len(particles), rve.volume_fraction)
    return rve
