"""Real spherical harmonics colour evaluation (degree 0-3) and its backward pass."""
import numpy as np

from utils.exceptions import InvalidArgumentError
from utils.validators import validate_sh_degree

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
         -0.4570457994644658, 1.445305721320277, -0.5900435899266435)


def sh_basis(dirs, degree):
    """Basis values (N, (L+1)^2) for unit directions (N, 3)."""
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    cols = [np.full(len(dirs), SH_C0)]
    if degree >= 1:
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        cols += [SH_C2[0] * x * y, SH_C2[1] * y * z, SH_C2[2] * (2.0 * zz - xx - yy),
                 SH_C2[3] * x * z, SH_C2[4] * (xx - yy)]
    if degree >= 3:
        cols += [SH_C3[0] * y * (3.0 * xx - yy), SH_C3[1] * x * y * z,
                 SH_C3[2] * y * (4.0 * zz - xx - yy), SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
                 SH_C3[4] * x * (4.0 * zz - xx - yy), SH_C3[5] * z * (xx - yy),
                 SH_C3[6] * x * (xx - 3.0 * yy)]
    return np.stack(cols, axis=1)


def sh_basis_grad(dirs, degree):
    """Derivatives of the basis wrt (x, y, z): (N, (L+1)^2, 3)."""
    n = len(dirs)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    zero = np.zeros(n)
    rows = [np.stack([zero, zero, zero], 1)]
    if degree >= 1:
        c = np.full(n, SH_C1)
        rows += [np.stack([zero, -c, zero], 1), np.stack([zero, zero, c], 1),
                 np.stack([-c, zero, zero], 1)]
    if degree >= 2:
        rows += [
            SH_C2[0] * np.stack([y, x, zero], 1),
            SH_C2[1] * np.stack([zero, z, y], 1),
            SH_C2[2] * np.stack([-2.0 * x, -2.0 * y, 4.0 * z], 1),
            SH_C2[3] * np.stack([z, zero, x], 1),
            SH_C2[4] * np.stack([2.0 * x, -2.0 * y, zero], 1),
        ]
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        rows += [
            SH_C3[0] * np.stack([6.0 * x * y, 3.0 * xx - 3.0 * yy, zero], 1),
            SH_C3[1] * np.stack([y * z, x * z, x * y], 1),
            SH_C3[2] * np.stack([-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z], 1),
            SH_C3[3] * np.stack([-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy], 1),
            SH_C3[4] * np.stack([4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z], 1),
            SH_C3[5] * np.stack([2.0 * x * z, -2.0 * y * z, xx - yy], 1),
            SH_C3[6] * np.stack([3.0 * xx - 3.0 * yy, -6.0 * x * y, zero], 1),
        ]
    return np.stack(rows, axis=1)


def _check(sh, degree):
    validate_sh_degree(degree)
    needed = (degree + 1) ** 2
    if sh.shape[-2] < needed:
        raise InvalidArgumentError('Degree %(degree)s needs %(needed)s coefficients, got %(got)s.',
                                   params={'degree': degree, 'needed': needed, 'got': sh.shape[-2]})
    return needed


def eval_sh(sh, view_dirs, degree):
    """
    Evaluate view-dependent colour.

    sh: (N, K, 3) coefficients, view_dirs: (N, 3) unit directions (Gaussian minus camera centre).
    Returns RGB (N, 3) = clamp(sum_k basis_k * sh_k + 0.5, 0, 1).
    """
    sh = np.asarray(sh, dtype=np.float64)
    view_dirs = np.asarray(view_dirs, dtype=np.float64)
    single = sh.ndim == 2
    if single:
        sh, view_dirs = sh[None], view_dirs[None]
    needed = _check(sh, degree)
    basis = sh_basis(view_dirs, degree)
    raw = np.einsum('nk,nkc->nc', basis, sh[:, :needed]) + 0.5
    rgb = np.clip(raw, 0.0, 1.0)
    return rgb[0] if single else rgb


def eval_sh_backward(sh, view_dirs, degree, grad_rgb):
    """
    Backward of eval_sh.

    Returns (grad_sh (N, K, 3), grad_dirs (N, 3)); channels clamped in the forward pass get
    no gradient.
    """
    needed = _check(sh, degree)
    basis = sh_basis(view_dirs, degree)
    raw = np.einsum('nk,nkc->nc', basis, sh[:, :needed]) + 0.5
    g = np.where((raw > 0.0) & (raw < 1.0), grad_rgb, 0.0)
    grad_sh = np.zeros_like(sh)
    grad_sh[:, :needed] = basis[:, :, None] * g[:, None, :]
    if degree == 0:
        return grad_sh, np.zeros_like(view_dirs)
    dbasis = sh_basis_grad(view_dirs, degree)
    # d colour_c / d dir = sum_k sh[k, c] * dbasis[k]
    grad_dirs = np.einsum('nc,nkc,nkj->nj', g, sh[:, :needed], dbasis)
    return grad_sh, grad_dirs


def rgb_to_sh0(rgb):
    """DC coefficient that evaluates to the given colour for degree 0."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0
