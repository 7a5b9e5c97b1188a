"""Binary wire format.

Every message is a 12-byte little-endian header followed by its payload:

    magic "MCTL" | version u8 | kind u8 | sensor_id u16 | payload_len u32

Coordinates travel as signed 32-bit fixed point in hundredths of a
centimeter, timestamps as signed 64-bit milliseconds.
"""

import struct
from enum import IntEnum
from typing import List, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from mctl.utils.errors import NeedMoreBytes, ProtocolError
from mctl.utils.models import (
    JointObservation,
    ObservationFrame,
    OcclusionReport,
    Pixel,
    Point3,
    Skeleton,
    TrackingState,
    WandDetection,
)


MAGIC = b"MCTL"
VERSION = 1
MAX_PAYLOAD = 1 << 20
FIXED_POINT_SCALE = 100.0

HEADER = struct.Struct("<4sBBHI")
HEADER_SIZE = HEADER.size

_I64 = struct.Struct("<q")
_PONG = struct.Struct("<qqq")
_F64 = struct.Struct("<d")
_CONTROL = struct.Struct("<BB")
_CALIB_HEAD = struct.Struct("<BB")
_DETECTION = struct.Struct("<HHHHHHiiiiB")
_FRAME_HEAD = struct.Struct("<qH")
_JOINT = struct.Struct("<HiiiB")
_U16 = struct.Struct("<H")

_INT32_MIN = -(1 << 31)
_INT32_MAX = (1 << 31) - 1

_STATE_CODES = {TrackingState.TRACKED: 0, TrackingState.INFERRED: 1}
_CODE_STATES = {code: state for state, code in _STATE_CODES.items()}


class MessageKind(IntEnum):
    HELLO = 1
    HELLO_ACK = 2
    SYNC_PING = 3
    SYNC_PONG = 4
    CALIB_FRAME = 5
    JOINT_FRAME = 6
    CONTROL = 7


class ControlMode(IntEnum):
    CALIBRATE = 1
    TRACK = 2
    STOP = 3


class Message(BaseModel):
    """One framed message."""

    model_config = ConfigDict(frozen=True)

    kind: MessageKind
    sensor_id: int = Field(0, ge=0, le=0xFFFF)
    payload: bytes = b""
    version: int = VERSION


def encode_message(message: Message) -> bytes:
    if len(message.payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(message.payload)} bytes exceeds {MAX_PAYLOAD}")
    return (
        HEADER.pack(
            MAGIC,
            message.version,
            int(message.kind),
            message.sensor_id,
            len(message.payload),
        )
        + message.payload
    )


def decode_from(
    buffer: Union[bytes, bytearray, memoryview], offset: int = 0
) -> Tuple[Message, int]:
    """Decode the message starting at offset.

    Returns:
        The message and the number of bytes it occupies

    Raises:
        NeedMoreBytes: the buffer ends inside the message
        ProtocolError: the bytes cannot start a valid message
    """
    available = len(buffer) - offset
    prefix = bytes(buffer[offset : offset + min(len(MAGIC), max(available, 0))])
    if not MAGIC.startswith(prefix):
        raise ProtocolError(f"bad magic {prefix!r}")
    if available < HEADER_SIZE:
        raise NeedMoreBytes(HEADER_SIZE - available)

    _, version, kind, sensor_id, payload_len = HEADER.unpack_from(buffer, offset)
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}")
    try:
        decoded_kind = MessageKind(kind)
    except ValueError as e:
        raise ProtocolError(f"unknown message kind {kind}") from e
    if payload_len > MAX_PAYLOAD:
        raise ProtocolError(f"declared payload of {payload_len} bytes exceeds {MAX_PAYLOAD}")

    total = HEADER_SIZE + payload_len
    if available < total:
        raise NeedMoreBytes(total - available)
    payload = bytes(buffer[offset + HEADER_SIZE : offset + total])
    return Message(kind=decoded_kind, sensor_id=sensor_id, payload=payload, version=version), total


def decode_message(data: bytes) -> Message:
    """Decode exactly one message."""
    message, used = decode_from(data)
    if used != len(data):
        raise ProtocolError(f"{len(data) - used} trailing bytes after message")
    return message


class MessageDecoder:
    """Reassembles messages from stream chunks."""

    def __init__(self) -> None:
        self._buffer = bytearray()

    def feed(self, data: bytes) -> List[Message]:
        self._buffer.extend(data)
        messages: List[Message] = []
        offset = 0
        while offset < len(self._buffer):
            try:
                message, used = decode_from(self._buffer, offset)
            except NeedMoreBytes:
                break
            messages.append(message)
            offset += used
        del self._buffer[:offset]
        return messages

    @property
    def pending(self) -> int:
        return len(self._buffer)


def _unpack(layout: struct.Struct, payload: bytes, offset: int = 0) -> Tuple:
    try:
        return layout.unpack_from(payload, offset)
    except struct.error as e:
        raise ProtocolError(f"truncated payload: {e}") from e


def _to_fixed(value: float) -> int:
    fixed = int(round(value * FIXED_POINT_SCALE))
    if not _INT32_MIN <= fixed <= _INT32_MAX:
        raise ProtocolError(f"coordinate {value} does not fit the wire format")
    return fixed


def _from_fixed(value: int) -> float:
    return value / FIXED_POINT_SCALE


def hello(sensor_id: int = 0) -> Message:
    """Hello with sensor_id 0 asks for a new id; a known id asks to re-attach."""
    return Message(kind=MessageKind.HELLO, sensor_id=sensor_id)


def hello_ack(sensor_id: int, fps: float) -> Message:
    return Message(kind=MessageKind.HELLO_ACK, sensor_id=sensor_id, payload=_F64.pack(fps))


def parse_hello_ack(payload: bytes) -> float:
    return float(_unpack(_F64, payload)[0])


def sync_ping(sensor_id: int, t1: int) -> Message:
    return Message(kind=MessageKind.SYNC_PING, sensor_id=sensor_id, payload=_I64.pack(t1))


def parse_sync_ping(payload: bytes) -> int:
    return int(_unpack(_I64, payload)[0])


def sync_pong(sensor_id: int, t1: int, t2: int, t3: int) -> Message:
    return Message(
        kind=MessageKind.SYNC_PONG, sensor_id=sensor_id, payload=_PONG.pack(t1, t2, t3)
    )


def parse_sync_pong(payload: bytes) -> Tuple[int, int, int]:
    t1, t2, t3 = _unpack(_PONG, payload)
    return int(t1), int(t2), int(t3)


def control(sensor_id: int, mode: ControlMode, placement: int = 0) -> Message:
    return Message(
        kind=MessageKind.CONTROL,
        sensor_id=sensor_id,
        payload=_CONTROL.pack(int(mode), placement),
    )


def parse_control(payload: bytes) -> Tuple[ControlMode, int]:
    mode, placement = _unpack(_CONTROL, payload)
    try:
        return ControlMode(mode), int(placement)
    except ValueError as e:
        raise ProtocolError(f"unknown control mode {mode}") from e


def calib_frame(sensor_id: int, placement: int, detections: Sequence[WandDetection]) -> Message:
    if len(detections) > 0xFF:
        raise ProtocolError("too many wand detections in one frame")
    parts = [_CALIB_HEAD.pack(placement, len(detections))]
    for d in detections:
        parts.append(
            _DETECTION.pack(
                d.bbox_ul.u,
                d.bbox_ul.v,
                d.bbox_br.u,
                d.bbox_br.v,
                d.center_pixel.u,
                d.center_pixel.v,
                _to_fixed(d.center_point.x),
                _to_fixed(d.center_point.y),
                _to_fixed(d.center_point.z),
                _to_fixed(d.radius_cm),
                int(d.partial),
            )
        )
    return Message(kind=MessageKind.CALIB_FRAME, sensor_id=sensor_id, payload=b"".join(parts))


def parse_calib_frame(payload: bytes) -> Tuple[int, List[WandDetection]]:
    placement, count = _unpack(_CALIB_HEAD, payload)
    detections: List[WandDetection] = []
    offset = _CALIB_HEAD.size
    for _ in range(count):
        ul_u, ul_v, br_u, br_v, c_u, c_v, x, y, z, radius, partial = _unpack(
            _DETECTION, payload, offset
        )
        offset += _DETECTION.size
        try:
            detections.append(
                WandDetection(
                    bbox_ul=Pixel(u=ul_u, v=ul_v),
                    bbox_br=Pixel(u=br_u, v=br_v),
                    center_pixel=Pixel(u=c_u, v=c_v),
                    center_point=Point3(x=_from_fixed(x), y=_from_fixed(y), z=_from_fixed(z)),
                    radius_cm=_from_fixed(radius),
                    partial=bool(partial),
                )
            )
        except ValueError as e:
            raise ProtocolError(f"invalid wand detection: {e}") from e
    if offset != len(payload):
        raise ProtocolError("calibration payload length mismatch")
    return int(placement), detections


def _bitmap(flags: Sequence[bool]) -> bytes:
    data = bytearray((len(flags) + 7) // 8)
    for index, flag in enumerate(flags):
        if flag:
            data[index // 8] |= 1 << (index % 8)
    return bytes(data)


def _bit(data: bytes, index: int) -> bool:
    return bool(data[index // 8] & (1 << (index % 8)))


def encode_joint_frame(frame: ObservationFrame, skeleton: Skeleton) -> bytes:
    """JointFrame payload.

    The frame must carry exactly one observation per skeleton joint. Bitmap
    bit i belongs to skeleton joint i.
    """
    report = frame.report or OcclusionReport(sensor_id=frame.sensor_id)
    joint_ids = [skeleton.index_of(obs.joint) for obs in frame.observations]
    if len(set(joint_ids)) != len(joint_ids):
        raise ProtocolError(f"duplicate joint in frame from sensor {frame.sensor_id}")
    if len(joint_ids) != len(skeleton.joints):
        raise ProtocolError(
            f"frame carries {len(joint_ids)} joints, skeleton {skeleton.name!r} "
            f"has {len(skeleton.joints)}"
        )
    parts = [_FRAME_HEAD.pack(frame.client_timestamp, len(joint_ids))]
    for joint_id, obs in zip(joint_ids, frame.observations):
        parts.append(
            _JOINT.pack(
                joint_id,
                _to_fixed(obs.position.x),
                _to_fixed(obs.position.y),
                _to_fixed(obs.position.z),
                _STATE_CODES[obs.tracking_state],
            )
        )
    parts.append(_bitmap([j in report.occluded_joints for j in skeleton.joints]))
    parts.append(_bitmap([j in report.inferred_joints for j in skeleton.joints]))
    parts.append(_U16.pack(min(report.intersection_count, 0xFFFF)))
    return b"".join(parts)


def joint_frame(frame: ObservationFrame, skeleton: Skeleton) -> Message:
    return Message(
        kind=MessageKind.JOINT_FRAME,
        sensor_id=frame.sensor_id,
        payload=encode_joint_frame(frame, skeleton),
    )


def parse_joint_frame(payload: bytes, skeleton: Skeleton, sensor_id: int) -> ObservationFrame:
    client_timestamp, count = _unpack(_FRAME_HEAD, payload)
    if count != len(skeleton.joints):
        raise ProtocolError(
            f"joint count {count} does not match skeleton {skeleton.name!r} "
            f"({len(skeleton.joints)} joints)"
        )
    offset = _FRAME_HEAD.size
    seen = set()
    observations: List[JointObservation] = []
    for _ in range(count):
        joint_id, x, y, z, state = _unpack(_JOINT, payload, offset)
        offset += _JOINT.size
        if joint_id >= len(skeleton.joints):
            raise ProtocolError(f"joint id {joint_id} outside skeleton {skeleton.name!r}")
        if joint_id in seen:
            raise ProtocolError(f"duplicate joint id {joint_id}")
        seen.add(joint_id)
        if state not in _CODE_STATES:
            raise ProtocolError(f"unknown tracking state {state}")
        observations.append(
            JointObservation(
                joint=skeleton.joints[joint_id],
                position=Point3(x=_from_fixed(x), y=_from_fixed(y), z=_from_fixed(z)),
                tracking_state=_CODE_STATES[state],
                sensor_id=sensor_id,
                client_timestamp=client_timestamp,
            )
        )

    width = (count + 7) // 8
    if len(payload) != offset + 2 * width + _U16.size:
        raise ProtocolError("joint frame payload length mismatch")
    occluded_bits = payload[offset : offset + width]
    inferred_bits = payload[offset + width : offset + 2 * width]
    (intersections,) = _unpack(_U16, payload, offset + 2 * width)

    report = OcclusionReport(
        sensor_id=sensor_id,
        occluded_joints=[j for i, j in enumerate(skeleton.joints) if _bit(occluded_bits, i)],
        inferred_joints=[j for i, j in enumerate(skeleton.joints) if _bit(inferred_bits, i)],
        intersection_count=intersections,
    )
    return ObservationFrame(
        sensor_id=sensor_id,
        client_timestamp=client_timestamp,
        observations=observations,
        report=report,
    )
