from .dataset import Dataset, load_cache, load_idx, save_cache, synthetic_sparse
from .idx import IDXError, read_idx, write_idx
from .metrics import PSNR_CAP, psnr, ssim

__all__ = [
    "Dataset",
    "IDXError",
    "PSNR_CAP",
    "load_cache",
    "load_idx",
    "psnr",
    "read_idx",
    "save_cache",
    "ssim",
    "synthetic_sparse",
    "write_idx",
]
