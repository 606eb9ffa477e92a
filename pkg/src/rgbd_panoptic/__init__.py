"""RGB-D panoptic segmentation building blocks on plain numpy arrays.

Fusion modules with analytic gradients, training losses, bottom-up panoptic
post-processing, PQ/mIoU metrics, an adaptive modality-drop scheduler and a
synthetic scene generator.
"""

from rgbd_panoptic.tensorcore import FeatureMap, ShapeError, as_feature_map

__version__ = "0.1.0"

__all__ = ["FeatureMap", "ShapeError", "as_feature_map", "__version__"]
