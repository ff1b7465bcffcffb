"""Render output channels."""
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from utils.exceptions import InvalidReferenceError


@dataclass(eq=False)
class FrameBuffer:
    """
    Output of one render.

    rgb (H, W, 3), depth (H, W), acc_alpha (H, W) and plane_masks (P, H, W), one soft mask
    per plane id in plane_ids. fingerprint identifies the (scene, camera) pair rendered;
    state holds what the backward pass needs.
    """

    rgb: np.ndarray
    depth: np.ndarray
    acc_alpha: np.ndarray
    plane_masks: np.ndarray
    plane_ids: list
    fingerprint: str = ''
    state: object = field(default=None, repr=False)

    @property
    def shape(self):
        return self.depth.shape

    @property
    def valid(self):
        """Pixels whose depth is defined."""
        return self.acc_alpha > settings.ALPHA_EPS

    def mask(self, plane_id):
        try:
            return self.plane_masks[self.plane_ids.index(plane_id)]
        except ValueError:
            raise InvalidReferenceError('No mask channel for plane %(id)s.',
                                        params={'id': plane_id}) from None


@dataclass
class FrameBufferGrad:
    """Upstream gradient of a scalar loss with respect to every FrameBuffer channel."""

    rgb: np.ndarray
    depth: np.ndarray
    acc_alpha: np.ndarray
    plane_masks: np.ndarray

    @classmethod
    def zeros_like(cls, fb):
        return cls(np.zeros_like(fb.rgb), np.zeros_like(fb.depth), np.zeros_like(fb.acc_alpha),
                   np.zeros_like(fb.plane_masks))

    def __iadd__(self, other):
        self.rgb += other.rgb
        self.depth += other.depth
        self.acc_alpha += other.acc_alpha
        self.plane_masks += other.plane_masks
        return self
