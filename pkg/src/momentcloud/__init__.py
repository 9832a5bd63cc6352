"""Moment-lifted point-cloud classification at desk scale.

Subpackages and modules:

- geometry: moments, canonical pose, sampling, neighbor graphs, augmentation
- nncore: minimal reverse-mode autodiff engine, layers, Adam, checkpoints
- model: the classifier architecture, training and evaluation
- dataio: meshes, synthetic shapes, file formats, dataset manifests
- experiments: the x^2 approximation and two-spiral studies
- cli: command-line entry points
"""

from . import dataio, experiments, geometry, model, nncore, rng

__version__ = "0.1.0"
__all__ = ["dataio", "experiments", "geometry", "model", "nncore", "rng"]
