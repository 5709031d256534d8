"""Motion-imitation toolkit: retargeting, planar simulation, matched-reward PPO."""

__version__ = "0.1.0"
