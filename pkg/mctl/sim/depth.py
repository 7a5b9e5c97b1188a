"""Synthetic depth frames of the calibration wand."""

from typing import Optional

import numpy as np

from mctl.utils.errors import DomainError
from mctl.utils.geometry import camera_to_pixel, pixel_angles, transform_to_client
from mctl.utils.models import (
    DEPTH_HEIGHT,
    DEPTH_WIDTH,
    MAX_DEPTH_CM,
    MIN_DEPTH_CM,
    DepthFrame,
    Point3,
    SensorPose,
)


BACKGROUND_CM = MAX_DEPTH_CM

_U, _V = np.meshgrid(np.arange(DEPTH_WIDTH, dtype=float), np.arange(DEPTH_HEIGHT, dtype=float))
_ALPHA, _BETA = pixel_angles(_U, _V)
# Per-pixel ray with unit z, so the ray parameter at a hit is the depth sample.
_RAYS = np.stack([np.tan(_ALPHA), np.tan(_BETA), np.ones_like(_ALPHA)], axis=-1)
_RAY_NORM2 = np.sum(_RAYS**2, axis=-1)


def render_sphere(center: Point3, radius_cm: float) -> np.ndarray:
    """Depth samples of a sphere, given in the client frame, against a flat background."""
    c = center.to_array()
    rc = _RAYS @ c
    disc = rc**2 - _RAY_NORM2 * (float(c @ c) - radius_cm**2)
    hit = disc >= 0.0
    depth = np.full(_RAY_NORM2.shape, BACKGROUND_CM)
    near = (rc - np.sqrt(np.where(hit, disc, 0.0))) / _RAY_NORM2
    hit &= near > 0.0
    depth[hit] = np.minimum(near[hit], BACKGROUND_CM)
    return depth


def in_view(center: Point3) -> bool:
    """Whether a client-frame point projects into the depth grid within range."""
    try:
        u, v = camera_to_pixel(center)
    except DomainError:
        return False
    return (
        0.0 <= u < DEPTH_WIDTH
        and 0.0 <= v < DEPTH_HEIGHT
        and MIN_DEPTH_CM <= center.z <= MAX_DEPTH_CM
    )


def render_wand_depth(
    wand_center: Point3,
    pose: SensorPose,
    radius_cm: float = 5.0,
    noise_cm: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    frame_timestamp: int = 0,
) -> DepthFrame:
    """Depth frame a sensor at pose captures of the wand at a server-frame position.

    Gaussian noise of noise_cm is added to wand pixels only; the frame is
    flagged out_of_range when the wand center falls outside the view.
    """
    center = transform_to_client(wand_center, pose)
    samples = render_sphere(center, radius_cm)
    if noise_cm > 0.0:
        rng = rng or np.random.default_rng()
        wand = samples < BACKGROUND_CM
        samples[wand] += rng.normal(0.0, noise_cm, size=int(wand.sum()))
    samples = np.clip(samples, 0.0, MAX_DEPTH_CM)
    return DepthFrame(
        samples=samples,
        frame_timestamp=frame_timestamp,
        out_of_range=not in_view(center),
    )
