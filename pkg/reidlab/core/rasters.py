"""Raster helpers: 8-bit grid, PNG IO, luminance, block DCT, image similarity"""
from functools import lru_cache
from pathlib import Path
from typing import List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image
from scipy.fft import dctn, idctn

LUMA = np.array([0.299, 0.587, 0.114])

SSIM_WINDOW = 8
SSIM_STRIDE = 4
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Clamp to [0,1] and snap to the 1/255 grid used by the 8-bit raster format"""
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.float32) / np.float32(255.0)


def check_image(pixels: np.ndarray, name: str = "image") -> None:
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"{name}: expected H x W x 3 raster, got shape {pixels.shape}")
    if not np.all(np.isfinite(pixels)):
        raise ValueError(f"{name}: non-finite pixel values")
    if pixels.min() < 0.0 or pixels.max() > 1.0:
        raise ValueError(f"{name}: pixel values must lie in [0,1]")


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def save_png(pixels: np.ndarray, path: str | Path) -> None:
    raster = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(raster).save(path, format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        raster = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return raster.astype(np.float32) / np.float32(255.0)


def luminance(pixels: np.ndarray) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64) @ LUMA


@lru_cache(maxsize=8)
def zigzag_order(block: int) -> Tuple[Tuple[int, int], ...]:
    """(row, col) positions of a block in JPEG zig-zag order"""
    order: List[Tuple[int, int]] = []
    for s in range(2 * block - 1):
        diagonal = [(i, s - i) for i in range(block) if 0 <= s - i < block]
        order.extend(diagonal if s % 2 else diagonal[::-1])
    return tuple(order)


def to_blocks(channel: np.ndarray, block: int) -> np.ndarray:
    """(H, W) -> (H/b, W/b, b, b)"""
    h, w = channel.shape
    if h % block or w % block:
        raise ValueError(f"raster {h}x{w} is not a multiple of the {block}x{block} block grid")
    return channel.reshape(h // block, block, w // block, block).swapaxes(1, 2)


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    nby, nbx, b, _ = blocks.shape
    return blocks.swapaxes(1, 2).reshape(nby * b, nbx * b)


def block_dct(channel: np.ndarray, block: int) -> np.ndarray:
    return dctn(to_blocks(channel, block), axes=(2, 3), norm="ortho")


def block_idct(coefs: np.ndarray) -> np.ndarray:
    return from_blocks(idctn(coefs, axes=(2, 3), norm="ortho"))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM over 8x8 uniform windows at stride 4, averaged over windows and channels (L = 1)"""
    check_same_shape(a, b)
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    win = (SSIM_WINDOW, SSIM_WINDOW)
    wx = sliding_window_view(x, win, axis=(0, 1))[::SSIM_STRIDE, ::SSIM_STRIDE]
    wy = sliding_window_view(y, win, axis=(0, 1))[::SSIM_STRIDE, ::SSIM_STRIDE]
    mu_x = wx.mean(axis=(-2, -1))
    mu_y = wy.mean(axis=(-2, -1))
    var_x = wx.var(axis=(-2, -1))
    var_y = wy.var(axis=(-2, -1))
    cov = (wx * wy).mean(axis=(-2, -1)) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for L = 1; +inf when the rasters are identical"""
    check_same_shape(a, b)
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))
