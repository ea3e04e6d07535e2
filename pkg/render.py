"""
Heatmap rendering of recorded fields.

This module provides:
- Font loading and caching for frame captions
- Diverging color maps of a scalar field on the (r, z) half plane
- Captioned PNG frames
- Animated GIF assembly
"""

import logging
import os
from io import BytesIO
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw, ImageFont

import config

logger = logging.getLogger(__name__)

RENDERABLE_FIELDS = ("u", "Gamma", "psi1", "Phi", "v_phi")


# ========= FONT LOADING =========
# Cache stores: size -> font
_font_cache: dict[int, ImageFont.ImageFont] = {}

_FONT_CANDIDATES = [
    "DejaVuSans.ttf",
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
]


def load_font(size: int) -> ImageFont.ImageFont:
    """
    Load a caption font with caching.

    Args:
        size: Font size in points

    Returns:
        The first candidate TrueType font found, or Pillow's default font
    """
    if size in _font_cache:
        return _font_cache[size]

    for path in _FONT_CANDIDATES:
        try:
            font = ImageFont.truetype(path, size=size)
        except OSError:
            continue
        _font_cache[size] = font
        return font

    # Default font is not cached (it ignores the size)
    return ImageFont.load_default()


def draw_text_with_stroke(draw, xy, text, font, fill=(255, 255, 255), stroke_fill=(0, 0, 0), stroke_width=2):
    """Draw a caption with an outline so it reads on any background."""
    draw.text(xy, text, font=font, fill=fill, stroke_width=stroke_width, stroke_fill=stroke_fill)


# ========= COLOR MAPS =========

def diverging_rgb(values: np.ndarray, scale: Optional[float] = None) -> np.ndarray:
    """
    Blue (negative) through white (zero) to red (positive).

    Args:
        values: 2D array
        scale: Magnitude mapped to full color; defaults to max|values|

    Returns:
        uint8 array of shape values.shape + (3,)
    """
    values = np.asarray(values, dtype=float)
    if scale is None:
        scale = float(np.max(np.abs(values))) if values.size else 0.0
    s = np.clip(values / scale, -1.0, 1.0) if scale > 0 else np.zeros_like(values)
    positive = np.clip(s, 0.0, 1.0)
    negative = np.clip(-s, 0.0, 1.0)
    rgb = np.empty(values.shape + (3,))
    rgb[..., 0] = 1.0 - negative
    rgb[..., 1] = 1.0 - positive - negative
    rgb[..., 2] = 1.0 - positive
    return (255.0 * rgb).round().astype(np.uint8)


def heatmap(values: np.ndarray, size: Tuple[int, int] = config.IMG_SIZE,
            scale: Optional[float] = None) -> Image.Image:
    """
    Heatmap of a field indexed [i, j] (i radial, j axial).

    The axis r = 0 is the left edge and z = +a the top edge.
    """
    rgb = diverging_rgb(values, scale)
    # image rows run top to bottom (z descending), columns left to right (r ascending)
    pixels = np.ascontiguousarray(np.transpose(rgb, (1, 0, 2))[::-1])
    return Image.fromarray(pixels).resize(size, Image.NEAREST)


def render_frame(values: np.ndarray, caption: str, size: Tuple[int, int] = config.IMG_SIZE,
                 scale: Optional[float] = None) -> Image.Image:
    """Heatmap with a caption in the top-left corner."""
    img = heatmap(values, size, scale)
    draw = ImageDraw.Draw(img)
    font = load_font(max(10, size[0] // 16))
    draw_text_with_stroke(draw, (6, 6), caption, font)
    return img


def png_bytes(img: Image.Image) -> bytes:
    buffer = BytesIO()
    img.save(buffer, format="PNG", optimize=True)
    return buffer.getvalue()


# ========= GIF =========

def assemble_gif(frames: List[Image.Image], durations: Sequence[int]) -> bytes:
    """
    Assemble frames into an animated GIF.

    Args:
        frames: PIL images of equal size
        durations: Frame durations in milliseconds

    Returns:
        GIF bytes ready to be saved or transmitted
    """
    if not frames:
        raise ValueError("No frames provided for GIF assembly")

    rgb_frames = [frame if frame.mode == "RGB" else frame.convert("RGB") for frame in frames]
    output = BytesIO()
    rgb_frames[0].save(
        output,
        format="GIF",
        save_all=True,
        append_images=rgb_frames[1:],
        duration=list(durations),
        loop=0,  # Infinite loop
        optimize=False,
    )
    return output.getvalue()


# ========= RUN DIRECTORIES =========

def field_values(state, name: str) -> np.ndarray:
    if name not in RENDERABLE_FIELDS:
        raise ValueError(f"Unknown field '{name}', expected one of {RENDERABLE_FIELDS}")
    if name == "v_phi":
        return state.v.v_phi.values
    return getattr(state, name).values


def render_series(series, name: str, size: Tuple[int, int] = config.IMG_SIZE) -> List[Image.Image]:
    """One frame per snapshot, all on the color scale of the largest |value| in the run."""
    stack = [field_values(snap.state, name) for snap in series.snapshots]
    scale = max(float(np.max(np.abs(v))) for v in stack) if stack else 0.0
    return [render_frame(values, f"{name}  t={snap.t:.4g}", size, scale)
            for values, snap in zip(stack, series.snapshots)]


def render_run(directory: str, names: Sequence[str] = ("u", "Gamma")) -> List[str]:
    """
    Write frames/<field>_NNNNNN.png for every checkpoint and frames/<field>.gif.

    Returns:
        Paths written
    """
    from artifacts import atomic_write_bytes, load_series

    series, _ = load_series(directory)
    frame_dir = os.path.join(directory, "frames")
    written = []
    for name in names:
        frames = render_series(series, name)
        for index, frame in enumerate(frames):
            path = os.path.join(frame_dir, f"{name}_{index:06d}.png")
            atomic_write_bytes(path, png_bytes(frame))
            written.append(path)
        gif_path = os.path.join(frame_dir, f"{name}.gif")
        atomic_write_bytes(gif_path, assemble_gif(frames, [config.GIF_FRAME_MS] * len(frames)))
        written.append(gif_path)
        logger.info("Rendered %d frames of %s to %s", len(frames), name, frame_dir)
    return written
