"""Real spherical harmonics up to degree 3 for view-dependent color.

The basis constants follow the 3DGS convention; channel values are offset by
+0.5 after the weighted sum and clamped to [0, 1] by callers. The evaluation
is written with plain arithmetic so it works on numpy arrays and torch
tensors alike.
"""

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
      0.3731763325901154, -0.4570457994644658, 1.445305721320277,
      -0.5900435899266435)


def sh_basis(dirs):
    """Stack the 16 SH basis values for unit directions.

    dirs: (..., 3) array/tensor of unit vectors. Returns (..., 16).
    """
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    one = x * 0 + 1.0
    vals = [
        C0 * one,
        -C1 * y,
        C1 * z,
        -C1 * x,
        C2[0] * xy,
        C2[1] * yz,
        C2[2] * (2.0 * zz - xx - yy),
        C2[3] * xz,
        C2[4] * (xx - yy),
        C3[0] * y * (3.0 * xx - yy),
        C3[1] * xy * z,
        C3[2] * y * (4.0 * zz - xx - yy),
        C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        C3[4] * x * (4.0 * zz - xx - yy),
        C3[5] * z * (xx - yy),
        C3[6] * x * (xx - 3.0 * yy),
    ]
    if hasattr(x, "new_tensor"):    # torch path
        import torch
        return torch.stack(vals, dim=-1)
    import numpy as np
    return np.stack(vals, axis=-1)


def eval_sh_color(sh_coeffs, dirs):
    """Color from SH coefficients at the given unit view directions.

    sh_coeffs: (..., 16, 3); dirs: (..., 3) broadcastable against the leading
    dims. Returns (..., 3) colors with the +0.5 offset applied, unclamped.
    """
    basis = sh_basis(dirs)                       # (..., 16)
    color = (sh_coeffs * basis[..., None]).sum(-2)
    return color + 0.5
