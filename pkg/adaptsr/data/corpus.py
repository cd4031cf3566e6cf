import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
import torch
from PIL import Image

from adaptsr.data.models import CorpusConfig
from adaptsr.errors import InvalidConfigError

logger = logging.getLogger(__name__)


# =========================
# PIL <-> TENSOR
# =========================
def to_pil(img: torch.Tensor) -> Image.Image:
    """[0,1] C×H×W tensor → 8-bit RGB (or L) image."""
    array = (img.detach().cpu().clamp(0.0, 1.0) * 255.0).round().to(torch.uint8)
    array = array.permute(1, 2, 0).numpy()
    if array.shape[2] == 1:
        return Image.fromarray(array[:, :, 0])
    return Image.fromarray(array)


def from_pil(image: Image.Image) -> torch.Tensor:
    array = np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(array.copy()).permute(2, 0, 1).contiguous()


# =========================
# PROCEDURAL PATTERNS
# Each returns an H×W×3 float array in [0,1]
# =========================
def _grid(size: int):
    coords = np.arange(size, dtype=np.float64) / size
    return np.meshgrid(coords, coords, indexing="ij")


def _colorize(field: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Maps a [0,1] scalar field between two random colors."""
    dark, light = rng.uniform(0.0, 0.35, 3), rng.uniform(0.65, 1.0, 3)
    return dark + field[..., None] * (light - dark)


def grating(size: int, rng: np.random.Generator) -> np.ndarray:
    """Sum of 2–3 oriented sinusoids with random frequencies and phases."""
    yy, xx = _grid(size)
    field = np.zeros((size, size))
    for _ in range(rng.integers(2, 4)):
        theta = rng.uniform(0, np.pi)
        cycles = rng.uniform(4, size / 6)
        phase = rng.uniform(0, 2 * np.pi)
        field += np.cos(2 * np.pi * cycles * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    field = (field - field.min()) / (np.ptp(field) + 1e-12)
    return _colorize(field, rng)


def stripes(size: int, rng: np.random.Generator) -> np.ndarray:
    """Hard-edged stripes at a random angle, or a checkerboard."""
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    period = int(rng.integers(4, 17))
    if rng.random() < 0.5:
        field = ((yy // period + xx // period) % 2).astype(np.float64)
    else:
        theta = rng.uniform(0, np.pi)
        position = xx * np.cos(theta) + yy * np.sin(theta)
        field = (np.floor(position / period) % 2).astype(np.float64)
    return _colorize(field, rng)


def filtered_noise(size: int, rng: np.random.Generator) -> np.ndarray:
    """White noise low-passed in the Fourier domain at a random cutoff, per channel."""
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.sqrt(fx ** 2 + fy ** 2)
    cutoff = rng.uniform(0.08, 0.35)
    mask = np.exp(-(radius / cutoff) ** 2)

    channels = []
    for _ in range(3):
        spectrum = np.fft.fft2(rng.standard_normal((size, size))) * mask
        channel = np.real(np.fft.ifft2(spectrum))
        channels.append((channel - channel.min()) / (np.ptp(channel) + 1e-12))
    return np.stack(channels, axis=-1)


def gradient(size: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth linear ramp blended with a radial falloff."""
    yy, xx = _grid(size)
    theta = rng.uniform(0, 2 * np.pi)
    ramp = xx * np.cos(theta) + yy * np.sin(theta)
    cy, cx = rng.uniform(0.2, 0.8, 2)
    radial = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    field = 0.6 * ramp + 0.4 * radial
    field = (field - field.min()) / (np.ptp(field) + 1e-12)
    return _colorize(field, rng)


PATTERNS: Dict[str, Callable[[int, np.random.Generator], np.ndarray]] = {
    "grating": grating,
    "stripes": stripes,
    "filtered_noise": filtered_noise,
    "gradient": gradient,
}


def make_pattern(kind: str, size: int, seed: int = 0) -> torch.Tensor:
    if kind not in PATTERNS:
        raise InvalidConfigError(f"unknown pattern {kind!r}; expected one of {sorted(PATTERNS)}")
    array = PATTERNS[kind](size, np.random.default_rng(seed))
    return torch.from_numpy(np.clip(array, 0.0, 1.0).astype(np.float32)).permute(2, 0, 1).contiguous()


# =========================
# CORPUS
# =========================
def make_synthetic_corpus(n: int, size: int, seed: int = 0) -> List[torch.Tensor]:
    """
    n seeded procedural 3×size×size images in [0,1], cycling through the
    pattern families so every family is represented.
    """
    if n < 1:
        raise InvalidConfigError(f"corpus size n must be >= 1, got {n}")
    kinds = list(PATTERNS)
    images = []
    for i in range(n):
        child = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        images.append(make_pattern(kinds[i % len(kinds)], size, child))
    logger.debug(f"[Corpus] Generated {n} synthetic {size}×{size} images (seed {seed})")
    return images


def load_png_folder(path: Union[str, Path], limit: Optional[int] = None) -> List[torch.Tensor]:
    """8-bit PNGs from a directory (sorted by name), as RGB tensors in [0,1]."""
    folder = Path(path)
    if not folder.is_dir():
        raise InvalidConfigError(f"{folder} is not a directory")
    files = sorted(folder.glob("*.png"))
    if limit is not None:
        files = files[:limit]
    if not files:
        raise InvalidConfigError(f"no PNG files in {folder}")

    images = []
    for file in files:
        with Image.open(file) as image:
            images.append(from_pil(image))
    logger.info(f"[Corpus] Loaded {len(images)} PNGs from {folder}")
    return images


def save_corpus(
    images: List[torch.Tensor],
    out_dir: Union[str, Path],
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """Writes img_0000.png … plus manifest.json; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, img in enumerate(images):
        name = f"img_{i:04d}.png"
        to_pil(img).save(out / name, format="PNG")
        files.append({"name": name, "height": int(img.shape[-2]), "width": int(img.shape[-1])})

    manifest = {"count": len(files), "seed": seed, "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    logger.info(f"[Corpus] Wrote {len(files)} images to {out}")
    return manifest


def load_corpus(cfg: CorpusConfig) -> List[torch.Tensor]:
    if cfg.source == "folder":
        return load_png_folder(cfg.folder, limit=cfg.n)
    return make_synthetic_corpus(cfg.n, cfg.size, cfg.seed)
