"""Random rigid rotation of a normalised point cloud."""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from vffr.features import FeaturedPointCloud


def rotation_matrix(seed) -> np.ndarray:
    """Uniformly distributed proper rotation (Haar measure on SO(3))."""
    rng = np.random.default_rng(seed)
    return Rotation.random(random_state=rng).as_matrix()


def random_rotation(cloud: FeaturedPointCloud, seed) -> FeaturedPointCloud:
    """Rotate coordinates about the normalisation center; R, G and labels are kept."""
    q = rotation_matrix(seed)
    out = cloud.take(np.arange(len(cloud)))
    out.xyz = cloud.xyz @ q.T
    return out
