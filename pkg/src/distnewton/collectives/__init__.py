from .comm import Communicator, Group
from .transport import (
    InProcessHub,
    InProcessTransport,
    TcpTransport,
    TransportConfig,
    free_listeners,
)

__all__ = [
    "Communicator",
    "Group",
    "InProcessHub",
    "InProcessTransport",
    "TcpTransport",
    "TransportConfig",
    "free_listeners",
]
