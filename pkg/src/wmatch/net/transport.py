"""UDP transport for watermark packets."""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import Counter, deque
from typing import Iterable

from .protocol import (
    CorruptPacketError,
    ForeignPacketError,
    TruncatedPacketError,
    decode,
    encode,
)
from .types import ReceivedPacket

DEFAULT_PORT = 47808

log = logging.getLogger(__name__)


def format_address(host: str, port: int) -> str:
    return f"{host}:{port}"


class UdpReceiver:
    """Background socket reader feeding a bounded queue.

    When the queue is full the oldest packet is discarded and counted in
    ``counters["overflow"]``.
    """

    def __init__(self, host: str = "0.0.0.0", port: int = DEFAULT_PORT, maxlen: int = 65536):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 22)
        self.sock.bind((host, port))
        self.sock.settimeout(0.1)
        self.address = self.sock.getsockname()
        self.queue: deque[ReceivedPacket] = deque()
        self.maxlen = maxlen
        self.counters: Counter = Counter()
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="wmatch-udp", daemon=True)

    def start(self) -> "UdpReceiver":
        self._thread.start()
        return self

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                data, (host, port) = self.sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                break
            self.handle(data, format_address(host, port))

    def handle(self, data: bytes, address: str) -> None:
        try:
            pkt = decode(data)
        except TruncatedPacketError:
            self.counters["truncated"] += 1
            return
        except ForeignPacketError:
            self.counters["foreign"] += 1
            return
        except CorruptPacketError:
            self.counters["corrupt"] += 1
            return
        with self._lock:
            if len(self.queue) >= self.maxlen:
                self.queue.popleft()
                self.counters["overflow"] += 1
            self.queue.append(ReceivedPacket(address, pkt))
            self.counters["received"] += 1

    def drain(self) -> list[ReceivedPacket]:
        with self._lock:
            items = list(self.queue)
            self.queue.clear()
        return items

    def close(self) -> None:
        self._stop.set()
        if self._thread.is_alive():
            self._thread.join(timeout=1.0)
        self.sock.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()


class UdpSender:
    """One socket per logical vehicle so each gets its own source address."""

    def __init__(self, target: tuple[str, int], bind_host: str = "127.0.0.1"):
        self.target = target
        self.bind_host = bind_host
        self.sockets: dict[str, socket.socket] = {}

    def source_address(self, name: str) -> str:
        sock = self._socket(name)
        host, port = sock.getsockname()
        return format_address(host, port)

    def _socket(self, name: str) -> socket.socket:
        sock = self.sockets.get(name)
        if sock is None:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            sock.bind((self.bind_host, 0))
            self.sockets[name] = sock
        return sock

    def send(self, packets: Iterable[ReceivedPacket], pause_every: int = 64, pause: float = 0.002) -> int:
        """Send each packet from the socket owned by its ``address`` label."""
        n = 0
        for rp in packets:
            self._socket(rp.address).sendto(encode(rp.packet), self.target)
            n += 1
            if pause_every and n % pause_every == 0:
                time.sleep(pause)
        return n

    def close(self) -> None:
        for sock in self.sockets.values():
            sock.close()
        self.sockets.clear()
