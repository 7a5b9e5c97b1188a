"""Camera model and planar rigid transforms shared by every stage.

The depth camera maps pixel offsets linearly onto viewing angles: 70 degrees
across the 512 columns and 60 degrees across the 424 rows, with pixel (256, 212)
on the optical axis. All client frames share the direction of their z-axis, so a
sensor pose is a yaw about z plus the wand origin seen from that sensor.
"""

import math
from typing import Tuple

from mctl.utils.errors import DomainError
from mctl.utils.models import (
    DEPTH_HEIGHT,
    DEPTH_WIDTH,
    MAX_DEPTH_CM,
    MIN_DEPTH_CM,
    ORIGIN,
    Pixel,
    Point3,
    SensorPose,
)


HORIZONTAL_FOV_RAD = math.radians(70.0)
VERTICAL_FOV_RAD = math.radians(60.0)
CENTER_U = DEPTH_WIDTH // 2
CENTER_V = DEPTH_HEIGHT // 2
RAD_PER_PIXEL_U = HORIZONTAL_FOV_RAD / DEPTH_WIDTH
RAD_PER_PIXEL_V = VERTICAL_FOV_RAD / DEPTH_HEIGHT


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.atan2(math.sin(theta), math.cos(theta))
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


def pixel_angles(u: float, v: float) -> Tuple[float, float]:
    """Horizontal and vertical viewing angles of a (possibly fractional) pixel."""
    return (u - CENTER_U) * RAD_PER_PIXEL_U, (v - CENTER_V) * RAD_PER_PIXEL_V


def pixel_to_camera(pixel: Pixel, depth: float) -> Point3:
    """Back-project a pixel at a depth into the client camera frame."""
    if not 0 <= pixel.u < DEPTH_WIDTH or not 0 <= pixel.v < DEPTH_HEIGHT:
        raise DomainError(f"pixel ({pixel.u}, {pixel.v}) outside the depth grid")
    if not MIN_DEPTH_CM <= depth <= MAX_DEPTH_CM:
        raise DomainError(f"depth {depth} cm outside [{MIN_DEPTH_CM}, {MAX_DEPTH_CM}]")
    alpha, beta = pixel_angles(pixel.u, pixel.v)
    return Point3(x=depth * math.tan(alpha), y=depth * math.tan(beta), z=depth)


def camera_to_pixel(point: Point3) -> Tuple[float, float]:
    """Project a client-frame point to fractional pixel coordinates."""
    if point.z <= 0:
        raise DomainError("point lies behind the sensor plane")
    u = CENTER_U + math.atan(point.x / point.z) / RAD_PER_PIXEL_U
    v = CENTER_V + math.atan(point.y / point.z) / RAD_PER_PIXEL_V
    return u, v


def rotate_z(x: float, y: float, theta: float) -> Tuple[float, float]:
    c = math.cos(theta)
    s = math.sin(theta)
    return x * c - y * s, x * s + y * c


def transform_to_server(point: Point3, pose: SensorPose) -> Point3:
    """Express a client-frame point in the server frame."""
    origin = pose.origin_in_client
    x, y = rotate_z(point.x - origin.x, point.y - origin.y, pose.yaw_theta)
    return Point3(x=x, y=y, z=point.z - origin.z)


def transform_to_client(point: Point3, pose: SensorPose) -> Point3:
    """Inverse of transform_to_server."""
    origin = pose.origin_in_client
    x, y = rotate_z(point.x, point.y, -pose.yaw_theta)
    return Point3(x=x + origin.x, y=y + origin.y, z=point.z + origin.z)


def sensor_position(pose: SensorPose) -> Point3:
    """Optical center of the sensor in the server frame."""
    return transform_to_server(ORIGIN, pose)


def vector_product(x1: float, y1: float, x2: float, y2: float) -> float:
    """z-component of the planar cross product."""
    return x1 * y2 - x2 * y1
