"""Neural surrogates for the voxel RFA engine.

Trains encoder-decoder networks to map (tumor mask, electrode mask) input
pairs to either the binary ablation lesion or the final temperature field,
using datasets produced by the engine's generator. Predictions are written
back in the engine's volume container format so they can be scored with the
engine's own evaluation tool.
"""

__version__ = "0.1.0"
