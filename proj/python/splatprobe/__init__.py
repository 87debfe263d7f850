"""Read per-pixel features out into Gaussian splats and score them."""

from ._core import (
    DataError,
    cloud_metrics,
    ftz_read,
    ftz_write,
    gradcheck,
    pca_fit,
    pearson_matrix,
    ply_read,
    ply_write,
    psnr,
    rank_cells,
    run,
    ssim,
    synth,
)

__all__ = [
    "DataError",
    "cloud_metrics",
    "ftz_read",
    "ftz_write",
    "gradcheck",
    "pca_fit",
    "pearson_matrix",
    "ply_read",
    "ply_write",
    "psnr",
    "rank_cells",
    "run",
    "ssim",
    "synth",
]
