"""Posed views with images, optional depths and per-plane masks."""
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from utils.exceptions import InvalidArgumentError, InvalidReferenceError


@dataclass(eq=False)
class View:
    """One posed image; masks map a plane label to an (H, W) boolean mask."""

    index: int
    camera: object
    image: np.ndarray
    depth: np.ndarray = None
    masks: dict = field(default_factory=dict)

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        shape = self.camera.shape
        if self.image.shape != shape + (3,):
            raise InvalidArgumentError('View %(i)s image has shape %(got)s, expected %(want)s.',
                                       params={'i': self.index, 'got': self.image.shape,
                                               'want': shape + (3,)})
        if self.depth is not None:
            self.depth = np.asarray(self.depth, dtype=np.float64)
            if self.depth.shape != shape:
                raise InvalidArgumentError('View %(i)s depth has shape %(got)s.',
                                           params={'i': self.index, 'got': self.depth.shape})
        masks = {}
        for label, mask in sorted(self.masks.items()):
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != shape:
                raise InvalidArgumentError('View %(i)s mask %(label)s has shape %(got)s.',
                                           params={'i': self.index, 'label': label, 'got': mask.shape})
            masks[int(label)] = mask
        self.masks = masks

    @property
    def labels(self):
        return sorted(self.masks)

    def mask(self, label):
        try:
            return self.masks[label]
        except KeyError:
            raise InvalidReferenceError('View %(i)s has no mask for label %(label)s.',
                                        params={'i': self.index, 'label': label}) from None

    def planar_mask(self):
        """Union of every plane mask of the view."""
        union = np.zeros(self.camera.shape, dtype=bool)
        for mask in self.masks.values():
            union |= mask
        return union


@dataclass(eq=False)
class Dataset:
    """Views plus optional ground-truth planes and an initial point cloud."""

    views: list
    gt_planes: list = field(default_factory=list)
    init_points: np.ndarray = None
    init_colors: np.ndarray = None
    test_every: int = settings.TEST_EVERY

    def __len__(self):
        return len(self.views)

    def view(self, index):
        for view in self.views:
            if view.index == index:
                return view
        raise InvalidReferenceError('Unknown view %(i)s.', params={'i': index})

    def is_test(self, view):
        return self.test_every > 0 and view.index % self.test_every == 0

    @property
    def train_views(self):
        views = [v for v in self.views if not self.is_test(v)]
        return views or list(self.views)

    @property
    def test_views(self):
        return [v for v in self.views if self.is_test(v)]

    @property
    def labels(self):
        return sorted({label for view in self.views for label in view.masks})

    def mask_keys(self, views=None):
        """Every (label, view index) pair in ascending order."""
        views = self.views if views is None else views
        return sorted((label, view.index) for view in views for label in view.masks)

    def masks_for(self, label):
        """(view, mask) pairs for one plane label."""
        return [(view, view.masks[label]) for view in self.views if label in view.masks]

    def bounds(self):
        """Axis-aligned bounds of the initial points and camera centres."""
        pts = [view.camera.center[None] for view in self.views]
        if self.init_points is not None and len(self.init_points):
            pts.append(self.init_points)
        pts = np.concatenate(pts)
        return pts.min(axis=0), pts.max(axis=0)

    def extent(self):
        """Scene extent: radius of the camera centres around their mean (3DGS convention)."""
        centers = np.stack([view.camera.center for view in self.views])
        radius = np.linalg.norm(centers - centers.mean(axis=0), axis=1).max()
        return float(max(radius, 1e-6) * 1.1)
