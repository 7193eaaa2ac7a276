"""Live session bridge.

Runs one scenario paced against the wall clock and streams per-tick state
messages to connected clients as newline-delimited JSON over TCP, or as
WebSocket text frames so a browser can connect directly. Clients send
commands, raw channel events, or a live human pose; everything inbound is
queued and applied at the next tick boundary, which keeps the simulation
itself single-threaded and deterministic given the same input timing.

The first client that sends anything becomes the controller; input from
other clients is ignored until the controller disconnects.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass

import numpy as np

from .engine import Scenario, Simulation
from .fusion import CLASS_NAMES, GESTURE_TOKENS, VOICE_TOKENS, ChannelEvent
from .geom import forward_kinematics

log = logging.getLogger("coact.bridge")

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


@dataclass
class BridgeMessage:
    """One validated inbound client message."""

    type: str
    data: dict


def parse_message(line: str) -> BridgeMessage:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as e:
        raise ValueError(f"invalid JSON: {e}") from None
    if not isinstance(data, dict) or "type" not in data:
        raise ValueError("message must be an object with a 'type'")
    kind = data["type"]
    if kind not in ("command", "channel_event", "human_pose"):
        raise ValueError(f"unknown message type {kind!r}")
    return BridgeMessage(type=kind, data=data)


class LineTransport:
    """Newline-delimited JSON over a plain TCP socket."""

    def __init__(self, sock: socket.socket) -> None:
        self.sock = sock
        self.rfile = sock.makefile("rb")

    def handshake(self) -> bool:
        return True

    def send(self, text: str) -> None:
        self.sock.sendall(text.encode() + b"\n")

    def recv(self) -> str | None:
        line = self.rfile.readline()
        if not line:
            return None
        return line.decode(errors="replace").strip()

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class WsTransport:
    """Server side of the WebSocket protocol, text frames only.

    Implements just the pieces a browser client exercises: the upgrade
    handshake, masked client frames, ping/pong, and close.
    """

    def __init__(self, sock: socket.socket) -> None:
        self.sock = sock
        self.rfile = sock.makefile("rb")

    def handshake(self) -> bool:
        # Read through the buffered reader so any frame bytes that arrive
        # together with the request stay available to recv().
        if not self.rfile.readline():
            return False
        key = None
        for _ in range(256):
            line = self.rfile.readline()
            if not line:
                return False
            if line in (b"\r\n", b"\n"):
                break
            name, _, value = line.partition(b":")
            if name.strip().lower() == b"sec-websocket-key":
                key = value.strip().decode()
        if key is None:
            return False
        accept = base64.b64encode(
            hashlib.sha1((key + _WS_GUID).encode()).digest()
        ).decode()
        self.sock.sendall(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode()
        )
        return True

    def _read_exact(self, n: int) -> bytes | None:
        data = self.rfile.read(n)
        if data is None or len(data) < n:
            return None
        return data

    def send(self, text: str) -> None:
        payload = text.encode()
        header = bytearray([0x81])
        n = len(payload)
        if n < 126:
            header.append(n)
        elif n < 65536:
            header.append(126)
            header += struct.pack(">H", n)
        else:
            header.append(127)
            header += struct.pack(">Q", n)
        self.sock.sendall(bytes(header) + payload)

    def recv(self) -> str | None:
        buffer = b""
        while True:
            head = self._read_exact(2)
            if head is None:
                return None
            fin = head[0] & 0x80
            opcode = head[0] & 0x0F
            masked = head[1] & 0x80
            length = head[1] & 0x7F
            if length == 126:
                ext = self._read_exact(2)
                if ext is None:
                    return None
                length = struct.unpack(">H", ext)[0]
            elif length == 127:
                ext = self._read_exact(8)
                if ext is None:
                    return None
                length = struct.unpack(">Q", ext)[0]
            mask = self._read_exact(4) if masked else b"\x00" * 4
            if mask is None:
                return None
            payload = self._read_exact(length) if length else b""
            if payload is None:
                return None
            if masked:
                payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
            if opcode == 0x8:  # close
                return None
            if opcode == 0x9:  # ping
                self.sock.sendall(b"\x8a" + bytes([len(payload)]) + payload)
                continue
            if opcode in (0x1, 0x0):
                buffer += payload
                if fin:
                    return buffer.decode(errors="replace")
                continue
            # binary and reserved opcodes are ignored

    def close(self) -> None:
        try:
            self.sock.sendall(b"\x88\x00")
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class _Client:
    def __init__(self, transport, addr) -> None:
        self.transport = transport
        self.addr = addr
        self.lock = threading.Lock()
        self.alive = True

    def send(self, obj: dict) -> bool:
        try:
            with self.lock:
                self.transport.send(json.dumps(obj))
            return True
        except OSError:
            self.alive = False
            return False


class BridgeServer:
    """Paced scenario execution with live clients."""

    def __init__(
        self,
        scenario: Scenario,
        host: str = "127.0.0.1",
        port: int = 8765,
        classifier=None,
        rate: float = 1.0,
        websocket: bool = False,
        max_ticks: int | None = None,
    ) -> None:
        self.scenario = scenario
        self.host = host
        self.port = port
        self.classifier = classifier
        self.rate = rate  # wall-clock speed multiplier; 0 disables pacing
        self.websocket = websocket
        self.max_ticks = max_ticks
        self.inbound: queue.Queue = queue.Queue()
        self.clients: list[_Client] = []
        self.clients_lock = threading.Lock()
        self.controller = None
        self.stop_event = threading.Event()
        self.listener: socket.socket | None = None
        self.bound_port: int | None = None

    # -- connection handling ------------------------------------------

    def _reader(self, client: _Client) -> None:
        while not self.stop_event.is_set():
            try:
                line = client.transport.recv()
            except OSError:
                break
            if line is None:
                break
            if not line:
                continue
            try:
                msg = parse_message(line)
            except ValueError as e:
                client.send({"type": "error", "error": str(e)})
                continue
            self.inbound.put((client.addr, msg))
        client.alive = False
        with self.clients_lock:
            if client in self.clients:
                self.clients.remove(client)
        if self.controller == client.addr:
            self.controller = None
            log.info("controller %s disconnected", client.addr)

    def _accept_loop(self) -> None:
        assert self.listener is not None
        while not self.stop_event.is_set():
            try:
                sock, addr = self.listener.accept()
            except OSError:
                break
            transport = WsTransport(sock) if self.websocket else LineTransport(sock)
            try:
                ok = transport.handshake()
            except OSError:
                ok = False
            if not ok:
                transport.close()
                continue
            client = _Client(transport, addr)
            client.send(self._hello())
            with self.clients_lock:
                self.clients.append(client)
            threading.Thread(target=self._reader, args=(client,), daemon=True).start()
            log.info("client %s connected", addr)

    def _broadcast(self, obj: dict) -> None:
        with self.clients_lock:
            clients = list(self.clients)
        for client in clients:
            if not client.send(obj):
                with self.clients_lock:
                    if client in self.clients:
                        self.clients.remove(client)

    # -- message shaping ------------------------------------------------

    def _hello(self) -> dict:
        return {
            "type": "hello",
            "scenario": self.scenario.name,
            "mode": self.scenario.mode,
            "T_r": self.scenario.iso.T_r,
            "clearance": self.scenario.iso.clearance,
            "n_joints": self.scenario.chain.n_joints,
            "classes": CLASS_NAMES,
        }

    def _state_message(self, sim: Simulation, warned: bool) -> dict:
        r = sim.records[-1]
        pose = forward_kinematics(sim.chain, r.q)
        links = [
            [list(map(float, c.a)), list(map(float, c.b)), float(c.radius)]
            for c in pose.capsules
        ]
        capsules, _ = sim.human.state_at(r.t)
        human = [
            [list(map(float, c.a)), list(map(float, c.b)), float(c.radius)]
            for c in capsules
        ]
        return {
            "type": "state",
            "t": r.t,
            "task": r.task,
            "s": r.s,
            "alpha": r.alpha,
            "binding": r.binding,
            "feasible": r.feasible,
            "distance": r.min_distance,
            "v_max": r.v_max,
            "v_rh": r.v_rh,
            "hold": sim.hold,
            "warning": warned,
            "q": [float(v) for v in r.q],
            "robot": links,
            "human": human,
        }

    # -- inbound application ---------------------------------------------

    def _apply(self, sim: Simulation, addr, msg: BridgeMessage) -> None:
        if self.controller is None:
            self.controller = addr
            log.info("client %s is now the controller", addr)
        if addr != self.controller:
            return
        t = sim.t
        data = msg.data
        if msg.type == "command":
            class_id = data.get("class_id")
            if class_id is None and "name" in data:
                if data["name"] in CLASS_NAMES:
                    class_id = CLASS_NAMES.index(data["name"])
            if isinstance(class_id, int) and 0 <= class_id < len(CLASS_NAMES):
                sim.dispatch_command(class_id, t)
        elif msg.type == "channel_event":
            channel = data.get("channel")
            token = data.get("token")
            if isinstance(token, str):
                table = {"voice": VOICE_TOKENS, "gesture": GESTURE_TOKENS}.get(channel, {})
                token = table.get(token)
            if isinstance(channel, str) and isinstance(token, int):
                try:
                    sim.inject_event(ChannelEvent(channel=channel, token=token, timestamp=t))
                except ValueError:
                    pass
        elif msg.type == "human_pose":
            position = data.get("position")
            velocity = data.get("velocity", [0.0, 0.0, 0.0])
            if isinstance(position, list) and len(position) == 3:
                sim.human.set_override(
                    np.asarray(position, dtype=float),
                    np.asarray(velocity, dtype=float),
                    t,
                )

    # -- main loop ---------------------------------------------------------

    def run(self):
        sim = Simulation(self.scenario, classifier=self.classifier)
        self.listener = socket.create_server((self.host, self.port))
        self.bound_port = self.listener.getsockname()[1]
        log.info(
            "bridge listening on %s:%d (%s)",
            self.host,
            self.bound_port,
            "websocket" if self.websocket else "ndjson",
        )
        threading.Thread(target=self._accept_loop, daemon=True).start()

        T_r = self.scenario.iso.T_r
        completed = True
        ticks = 0
        try:
            sim._next_task()
            next_deadline = time.monotonic()
            while sim.traj is not None and not self.stop_event.is_set():
                if sim.t >= self.scenario.timeout_s:
                    completed = False
                    break
                if self.max_ticks is not None and ticks >= self.max_ticks:
                    completed = False
                    break
                while True:
                    try:
                        addr, msg = self.inbound.get_nowait()
                    except queue.Empty:
                        break
                    self._apply(sim, addr, msg)
                n_warn = len(sim.warning_times)
                sim._tick()
                ticks += 1
                self._broadcast(
                    self._state_message(sim, len(sim.warning_times) > n_warn)
                )
                if self.rate > 0.0:
                    next_deadline += T_r / self.rate
                    delay = next_deadline - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
            result = sim._finish(completed, sim.t)
            self._broadcast({"type": "done", "metrics": result.metrics})
            return result
        finally:
            self.stop_event.set()
            try:
                self.listener.close()
            except OSError:
                pass
            with self.clients_lock:
                for client in self.clients:
                    client.transport.close()
                self.clients.clear()
