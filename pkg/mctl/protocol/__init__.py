"""Wire protocol plus the server and client runtimes."""

from mctl.protocol.client import SensorClient, client_loop
from mctl.protocol.codec import (
    ControlMode,
    Message,
    MessageDecoder,
    MessageKind,
    decode_message,
    encode_message,
)
from mctl.protocol.server import FusionServer, ServerShell, TickResult, serve

__all__ = [
    "ControlMode",
    "FusionServer",
    "Message",
    "MessageDecoder",
    "MessageKind",
    "SensorClient",
    "ServerShell",
    "TickResult",
    "client_loop",
    "decode_message",
    "encode_message",
    "serve",
]
