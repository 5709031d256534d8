"""One-dimensional terrain height fields for the planar simulator."""

from dataclasses import dataclass

import numpy as np

KINDS = ("plane", "rand", "pyramid", "wave")

RAND_CELL = 0.5
RAND_HEIGHTS = (0.0, 0.2)
PYRAMID_STEP_WIDTH = 0.5
PYRAMID_STEP_HEIGHT = 0.05
PYRAMID_PLATFORM_HALF = 0.5
PYRAMID_STEPS = 20
WAVE_AMPLITUDE = 0.5
WAVE_PERIOD_COEF = np.pi / 6.0
HALF_EXTENT = 120.0


@dataclass(frozen=True)
class TerrainSpec:
    kind: str = "plane"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown terrain {self.kind!r}; expected one of {KINDS}")


class Terrain:
    def __init__(self, spec: TerrainSpec):
        self.spec = spec
        if spec.kind == "rand":
            n = int(2 * HALF_EXTENT / RAND_CELL)
            rng = np.random.default_rng([spec.seed, 7919])
            self._cells = rng.choice(np.array(RAND_HEIGHTS), size=n)

    def height(self, x):
        """Returns (height, slope dh/dx) at x (array-friendly)."""
        x = np.asarray(x, dtype=np.float64)
        kind = self.spec.kind
        if kind == "plane":
            return np.zeros_like(x), np.zeros_like(x)
        if kind == "wave":
            h = WAVE_AMPLITUDE * np.cos(WAVE_PERIOD_COEF * x)
            s = -WAVE_AMPLITUDE * WAVE_PERIOD_COEF * np.sin(WAVE_PERIOD_COEF * x)
            return h, s
        if kind == "rand":
            idx = np.floor((x + HALF_EXTENT) / RAND_CELL).astype(np.int64)
            idx = np.clip(idx, 0, self._cells.size - 1)
            return self._cells[idx], np.zeros_like(x)
        # pyramid: flat top platform of 1 m, steps of 0.5 m going down on both sides
        d = np.abs(x) - PYRAMID_PLATFORM_HALF
        k = np.where(d <= 0.0, 0, np.ceil(d / PYRAMID_STEP_WIDTH))
        h = PYRAMID_STEP_HEIGHT * np.maximum(0.0, PYRAMID_STEPS - k)
        return h, np.zeros_like(x)


def terrain_height(spec: TerrainSpec, x):
    return Terrain(spec).height(x)
