"""Voxel-based RFA thermal-effect engine.

Simulates electrostatic heating, Pennes bio-heat diffusion, and Arrhenius
cell necrosis on regular voxel grids, generates surrogate-training datasets,
evaluates predictions, and serves an interactive electrode-placement planner.
"""

__version__ = "0.1.0"

RNG_ALGORITHM = "philox4x64"
