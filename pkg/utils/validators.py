"""Argument validators for engines and config records."""
import numpy as np

from .exceptions import InvalidArgumentError


def validate_positive(value, name):
    """Validate a strictly positive scalar."""
    if not value > 0:
        raise InvalidArgumentError('%(name)s must be positive, got %(value)s.',
                                   params={'name': name, 'value': value})


def validate_non_negative(value, name):
    """Validate a scalar (or every entry of an array) is >= 0."""
    if np.any(np.asarray(value) < 0):
        raise InvalidArgumentError('%(name)s cannot be negative.', params={'name': name})


def validate_sh_degree(degree):
    """Validate spherical harmonics degree (0-3)."""
    if not isinstance(degree, (int, np.integer)) or degree < 0 or degree > 3:
        raise InvalidArgumentError('SH degree must be between 0 and 3, got %(degree)s.',
                                   params={'degree': degree})


def validate_same_shape(a, b, what='arrays'):
    """Validate two arrays have identical shapes."""
    if np.shape(a) != np.shape(b):
        raise InvalidArgumentError('Shape mismatch between %(what)s: %(a)s vs %(b)s.',
                                   params={'what': what, 'a': np.shape(a), 'b': np.shape(b)})


def validate_vector(value, size, name):
    """Validate a finite vector of the given length and return it as float64."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (size,) or not np.all(np.isfinite(arr)):
        raise InvalidArgumentError('%(name)s must be a finite %(size)s-vector.',
                                   params={'name': name, 'size': size})
    return arr


def validate_unit_interval(value, name, open_interval=True):
    """Validate a value lies in (0, 1) or [0, 1]."""
    arr = np.asarray(value)
    bad = np.any((arr <= 0) | (arr >= 1)) if open_interval else np.any((arr < 0) | (arr > 1))
    if bad:
        bounds = '(0, 1)' if open_interval else '[0, 1]'
        raise InvalidArgumentError('%(name)s must lie in %(bounds)s.',
                                   params={'name': name, 'bounds': bounds})


def validate_min_count(count, minimum, name):
    """Validate a count reaches a minimum."""
    if count < minimum:
        raise InvalidArgumentError('%(name)s must be at least %(minimum)s, got %(count)s.',
                                   params={'name': name, 'minimum': minimum, 'count': count})
