"""
Bright-field slide rendering.

Objects are drawn with Pillow onto a warm light background, then the whole
frame is Gaussian blurred and perturbed with pixel noise.
"""

import logging

import numpy as np
from PIL import Image, ImageDraw
from scipy.ndimage import gaussian_filter

from honeyscope.synth.slide import BUBBLE, layout_slide

logger = logging.getLogger(__name__)

PALETTE = {
    'round': {'fill': (214, 178, 96), 'rim': (150, 112, 52), 'speckle': (176, 138, 70)},
    'triangular': {'fill': (200, 160, 112), 'rim': (132, 96, 60)},
    'spiky': {'fill': (196, 170, 84), 'rim': (128, 106, 44)},
    'bubble': {'ring': (70, 72, 84), 'highlight': (250, 250, 252)},
}


def _ellipse(cx, cy, r):
    return [cx - r, cy - r, cx + r, cy + r]


def _draw_round(draw, obj, rng):
    colors = PALETTE['round']
    rim = max(2, int(round(0.12 * obj.radius)))
    draw.ellipse(_ellipse(obj.cx, obj.cy, obj.radius), fill=colors['fill'], outline=colors['rim'], width=rim)
    for _ in range(int(obj.radius ** 2 / 60)):
        angle = rng.uniform(0, 2 * np.pi)
        distance = 0.65 * obj.radius * np.sqrt(rng.uniform())
        size = rng.uniform(1.0, 2.2)
        draw.ellipse(_ellipse(obj.cx + distance * np.cos(angle), obj.cy + distance * np.sin(angle), size),
                     fill=colors['speckle'])


def _draw_triangular(draw, obj, rng):
    colors = PALETTE['triangular']
    rim = max(2, int(round(0.08 * obj.radius)))
    points = [tuple(p) for p in obj.outline]
    draw.polygon(points, fill=colors['fill'], outline=colors['rim'], width=rim)


def _draw_spiky(draw, obj, rng):
    colors = PALETTE['spiky']
    for tip, left, right in obj.outline:
        draw.polygon([tuple(left), tuple(tip), tuple(right)], fill=colors['rim'])
    rim = max(2, int(round(0.1 * obj.radius)))
    draw.ellipse(_ellipse(obj.cx, obj.cy, obj.radius), fill=colors['fill'], outline=colors['rim'], width=rim)


def _draw_bubble(draw, obj, rng):
    colors = PALETTE['bubble']
    draw.ellipse(_ellipse(obj.cx, obj.cy, obj.radius), outline=colors['ring'], width=3)
    if obj.radius > 6:
        draw.ellipse(_ellipse(obj.cx, obj.cy, obj.radius - 4), outline=colors['highlight'], width=1)


DRAWERS = {
    'round': _draw_round,
    'triangular': _draw_triangular,
    'spiky': _draw_spiky,
    BUBBLE: _draw_bubble,
}


def render(layout, spec, rng):
    """
    Render a layout to an extent x extent x 3 uint8 image.

    Args:
        layout: SlideLayout
        spec: SlideSpec supplying blur and noise
        rng: numpy Generator for speckle and noise
    """
    image = Image.new('RGB', (layout.extent, layout.extent), color=tuple(layout.background))
    draw = ImageDraw.Draw(image)
    for obj in layout.objects:
        DRAWERS[obj.kind](draw, obj, rng)

    pixels = np.asarray(image, dtype=np.float32)
    if spec.blur_sigma > 0:
        pixels = gaussian_filter(pixels, sigma=(spec.blur_sigma, spec.blur_sigma, 0))
    if spec.noise_amplitude > 0:
        pixels = pixels + rng.normal(0.0, spec.noise_amplitude, size=pixels.shape)
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def gen_slide(spec, seed=None, image_id='slide'):
    """
    Lay out and render one slide.

    Returns:
        tuple: (H x W x 3 uint8 image, Annotation); fully determined by (spec, seed)
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    layout = layout_slide(spec, rng, image_id=image_id)
    pixels = render(layout, spec, rng)
    annotation = layout.annotation
    logger.debug(f"Rendered {image_id}: {len(annotation.labels)} grains, {len(annotation.bubbles)} bubbles")
    return pixels, annotation
