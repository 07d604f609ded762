"""Master/worker distributed fitness evaluation.

Wire format: newline-delimited UTF-8 JSON over a reliable byte stream, one
message per line, every message carrying "v": 1 and a "type" from {hello,
job_request, job, result, shutdown}.  Workers pull jobs; jobs held by a
dead or silent worker are re-queued, and the master records at most one
result per job id, so dispatch is at-least-once with idempotent dedup.

The master also accepts "submitter" peers that stream jobs in over the
same protocol and receive their results back, which is how a separately
launched evolution process delegates evaluation to a standing broker.
"""
from __future__ import annotations

import base64
import json
import logging
import os
import socket
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field

from .controllers import deserialize_controller, serialize_controller
from .morphology import VoxelGrid, generate_benchmark, parse_morphology, render_morphology
from .orchestrator import DIVERGENCE_PENALTY, evaluate_controller
from .physics import SimParams

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 16 * 1024 * 1024
MESSAGE_TYPES = ("hello", "job_request", "job", "result", "shutdown")

DEFAULT_JOB_TIMEOUT = 60.0
DEFAULT_PORT = 7711


class ProtocolError(RuntimeError):
    pass


class MalformedFrameError(ProtocolError):
    pass


class UnsupportedVersionError(ProtocolError):
    pass


class FrameTooLargeError(ProtocolError):
    pass


def encode_message(msg: dict) -> bytes:
    """One JSON object per line; floats keep full round-trip precision
    (json repr of Python floats is shortest-roundtrip)."""
    out = dict(msg)
    out.setdefault("v", PROTOCOL_VERSION)
    data = json.dumps(out, separators=(",", ":")).encode("utf-8") + b"\n"
    if len(data) > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"frame of {len(data)} bytes exceeds {MAX_FRAME_BYTES}")
    return data


def decode_message(data: bytes) -> dict:
    if len(data) > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"frame of {len(data)} bytes exceeds {MAX_FRAME_BYTES}")
    try:
        msg = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise MalformedFrameError(f"undecodable frame: {err}") from None
    if not isinstance(msg, dict) or "type" not in msg:
        raise MalformedFrameError("frame is not a message object")
    if msg.get("v") != PROTOCOL_VERSION:
        raise UnsupportedVersionError(f"unsupported protocol version {msg.get('v')!r}")
    if msg["type"] not in MESSAGE_TYPES:
        raise MalformedFrameError(f"unknown message type {msg['type']!r}")
    return msg


@dataclass(frozen=True)
class EvalJob:
    job_id: int
    morphology_id: str
    controller: str  # serialized controller text
    sim_params: dict = field(default_factory=dict)

    def to_message(self) -> dict:
        return {
            "v": PROTOCOL_VERSION,
            "type": "job",
            "job_id": self.job_id,
            "morphology_id": self.morphology_id,
            "controller": base64.b64encode(self.controller.encode("utf-8")).decode("ascii"),
            "sim_params": self.sim_params,
        }

    @classmethod
    def from_message(cls, msg: dict) -> "EvalJob":
        try:
            controller = base64.b64decode(msg["controller"].encode("ascii")).decode("utf-8")
            return cls(
                job_id=int(msg["job_id"]),
                morphology_id=str(msg["morphology_id"]),
                controller=controller,
                sim_params=dict(msg.get("sim_params") or {}),
            )
        except (KeyError, ValueError, TypeError) as err:
            raise MalformedFrameError(f"bad job message: {err}") from None


@dataclass
class EvalResult:
    job_id: int
    displacement: float
    status: str  # ok | diverged | error
    worker_id: str = ""
    elapsed_ms: float = 0.0
    error: str = ""

    def to_message(self) -> dict:
        msg = {
            "v": PROTOCOL_VERSION,
            "type": "result",
            "job_id": self.job_id,
            "displacement": self.displacement,
            "status": self.status,
            "worker_id": self.worker_id,
            "elapsed_ms": self.elapsed_ms,
        }
        if self.error:
            msg["error"] = self.error
        return msg

    @classmethod
    def from_message(cls, msg: dict) -> "EvalResult":
        try:
            return cls(
                job_id=int(msg["job_id"]),
                displacement=float(msg["displacement"]),
                status=str(msg["status"]),
                worker_id=str(msg.get("worker_id", "")),
                elapsed_ms=float(msg.get("elapsed_ms", 0.0)),
                error=str(msg.get("error", "")),
            )
        except (KeyError, ValueError, TypeError) as err:
            raise MalformedFrameError(f"bad result message: {err}") from None


class MorphologyRegistry:
    """Worker-side morphology resolution.

    Benchmark ids ("bench:<index>:<seed>") are generated on demand; file
    morphologies must be pre-registered and are addressed by content hash
    ("file:<sha256 of the rendered document>").
    """

    def __init__(self):
        self._grids: dict[str, VoxelGrid] = {}

    def register_grid(self, grid: VoxelGrid) -> str:
        mid = file_morphology_id(grid)
        self._grids[mid] = grid
        return mid

    def register_file(self, text: str) -> str:
        return self.register_grid(parse_morphology(text))

    def resolve(self, morphology_id: str) -> VoxelGrid:
        if morphology_id in self._grids:
            return self._grids[morphology_id]
        if morphology_id.startswith("bench:"):
            parts = morphology_id.split(":")
            if len(parts) != 3:
                raise KeyError(f"bad benchmark id {morphology_id!r}")
            grid = generate_benchmark(int(parts[1]), int(parts[2]))
            self._grids[morphology_id] = grid
            return grid
        raise KeyError(f"unknown morphology id {morphology_id!r}")


def file_morphology_id(grid: VoxelGrid) -> str:
    import hashlib

    digest = hashlib.sha256(render_morphology(grid).encode("utf-8")).hexdigest()
    return f"file:{digest}"


def bench_morphology_id(index: int, seed: int) -> str:
    return f"bench:{index}:{seed}"


def morphology_id_for(grid: VoxelGrid, morphology_seed: int | None = None) -> str:
    """Stable id for a grid: benchmark ids when the grid is a generated
    benchmark, content hash otherwise."""
    if morphology_seed is not None and grid.id.startswith("bha-"):
        return bench_morphology_id(int(grid.id.split("-")[1]), morphology_seed)
    return file_morphology_id(grid)


def execute_job(job: EvalJob, registry: MorphologyRegistry, worker_id: str = "local") -> EvalResult:
    """Deserialize, resolve, simulate.  This single code path backs both the
    in-process backend and remote workers, so displacement values do not
    depend on where a job ran."""
    started = time.perf_counter()
    try:
        grid = registry.resolve(job.morphology_id)
    except KeyError as err:
        return EvalResult(job.job_id, DIVERGENCE_PENALTY, "error", worker_id,
                          (time.perf_counter() - started) * 1e3, str(err))
    try:
        controller = deserialize_controller(job.controller)
        params = SimParams(**job.sim_params)
        displacement = evaluate_controller(controller, grid, params)
    except Exception as err:  # malformed payloads must not kill the worker
        return EvalResult(job.job_id, DIVERGENCE_PENALTY, "error", worker_id,
                          (time.perf_counter() - started) * 1e3, str(err))
    status = "diverged" if displacement == DIVERGENCE_PENALTY else "ok"
    return EvalResult(job.job_id, displacement, status, worker_id,
                      (time.perf_counter() - started) * 1e3)


def run_jobs_local(jobs, registry: MorphologyRegistry | None = None) -> dict[int, EvalResult]:
    """In-process backend with the same job/result interface as the wire."""
    registry = registry or MorphologyRegistry()
    return {job.job_id: execute_job(job, registry) for job in jobs}


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host:
        raise ValueError(f"address {addr!r} must look like host:port")
    return host, int(port)


def default_bind_address() -> str:
    return os.environ.get("VOXEVO_BIND", f"127.0.0.1:{DEFAULT_PORT}")


class _LineChannel:
    """Blocking line-framed JSON channel over a socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._buf = b""
        self._wlock = threading.Lock()

    def send(self, msg: dict) -> None:
        data = encode_message(msg)
        with self._wlock:
            self.sock.sendall(data)

    def recv(self) -> dict | None:
        """Next message, or None on clean EOF."""
        while b"\n" not in self._buf:
            if len(self._buf) > MAX_FRAME_BYTES:
                raise FrameTooLargeError("peer exceeded the frame limit without newline")
            chunk = self.sock.recv(65536)
            if not chunk:
                if self._buf:
                    raise MalformedFrameError("connection closed mid-frame")
                return None
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return decode_message(line)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class EvalMaster:
    """Pull-model job server.

    With a local job source it completes when every job has exactly one
    recorded result (`wait()` returns the results map).  Submitter peers may
    also stream jobs in; their results are routed back on their own
    connection.
    """

    def __init__(self, bind_address: str | None = None, jobs=None,
                 timeout: float = DEFAULT_JOB_TIMEOUT):
        self.bind_address = bind_address or default_bind_address()
        self.timeout = timeout
        self._lock = threading.Condition()
        self._pending: deque = deque()
        self._in_flight: dict = {}  # key -> (job, origin, deadline)
        self._holders: dict = {}  # key -> conn_id currently evaluating it
        self._results: dict[int, EvalResult] = {}
        self._local_total = 0
        self._closed = False
        self._threads: list[threading.Thread] = []
        self._conn_seq = 0
        if jobs is not None:
            for job in jobs:
                self._pending.append((("local", job.job_id), job, None))
                self._local_total += 1

    # -- lifecycle -----------------------------------------------------
    def start(self) -> "EvalMaster":
        host, port = parse_address(self.bind_address)
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind((host, port))
        self._server.listen(64)
        self.address = f"{self._server.getsockname()[0]}:{self._server.getsockname()[1]}"
        acceptor = threading.Thread(target=self._accept_loop, daemon=True, name="voxevo-acceptor")
        acceptor.start()
        monitor = threading.Thread(target=self._timeout_loop, daemon=True, name="voxevo-timeouts")
        monitor.start()
        self._threads += [acceptor, monitor]
        log.info("master listening on %s", self.address)
        return self

    def shutdown(self) -> None:
        with self._lock:
            self._closed = True
            self._lock.notify_all()
        try:
            self._server.close()
        except OSError:
            pass

    def wait(self, timeout: float | None = None) -> dict[int, EvalResult]:
        """Block until every locally sourced job has a result."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._lock:
            while len(self._results) < self._local_total and not self._closed:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise TimeoutError(
                        f"{self._local_total - len(self._results)} of {self._local_total} jobs unresolved"
                    )
                self._lock.wait(timeout=1.0 if remaining is None else min(1.0, remaining))
            return dict(self._results)

    # -- internals -----------------------------------------------------
    def _accept_loop(self) -> None:
        while not self._closed:
            try:
                sock, _ = self._server.accept()
            except OSError:
                return
            with self._lock:
                self._conn_seq += 1
                conn_id = self._conn_seq
            handler = threading.Thread(
                target=self._serve_connection, args=(sock, conn_id), daemon=True,
                name=f"voxevo-conn-{conn_id}",
            )
            handler.start()

    def _timeout_loop(self) -> None:
        while not self._closed:
            time.sleep(0.25)
            now = time.monotonic()
            with self._lock:
                expired = [k for k, (_, _, dl) in self._in_flight.items() if dl <= now]
                for key in expired:
                    job, origin, _ = self._in_flight.pop(key)
                    log.warning("job %s timed out; re-queueing", key)
                    self._pending.appendleft((key, job, origin))
                if expired:
                    self._lock.notify_all()

    def _requeue_connection(self, conn_id: int) -> None:
        with self._lock:
            held = [k for k in self._in_flight if self._holders.get(k) == conn_id]
            for key in held:
                job, origin, _ = self._in_flight.pop(key)
                self._holders.pop(key, None)
                log.warning("worker conn %d dropped; re-queueing job %s", conn_id, key)
                self._pending.appendleft((key, job, origin))
            if held:
                self._lock.notify_all()

    def _serve_connection(self, sock: socket.socket, conn_id: int) -> None:
        chan = _LineChannel(sock)
        role = "worker"
        try:
            hello = chan.recv()
            if hello is None:
                return
            if hello["type"] != "hello":
                raise MalformedFrameError("peer must open with hello")
            role = hello.get("role", "worker")
            if role == "worker":
                self._worker_session(chan, conn_id)
            elif role == "submitter":
                self._submitter_session(chan, conn_id)
            else:
                raise MalformedFrameError(f"unknown role {role!r}")
        except ProtocolError as err:
            log.warning("dropping %s conn %d: %s", role, conn_id, err)
        except OSError:
            pass
        finally:
            if role == "worker":
                self._requeue_connection(conn_id)
            chan.close()

    def _next_job(self, conn_id: int):
        """Blocking pull; returns (key, job) or None when the peer should
        shut down."""
        with self._lock:
            while True:
                if self._closed:
                    return None
                if self._pending:
                    key, job, origin = self._pending.popleft()
                    if key[0] == "local" and key[1] in self._results:
                        continue  # already resolved elsewhere
                    self._in_flight[key] = (job, origin, time.monotonic() + self.timeout)
                    self._holders[key] = conn_id
                    return key, job
                if self._local_total and len(self._results) >= self._local_total:
                    return None  # local campaign complete
                self._lock.wait(timeout=0.5)

    def _record_result(self, result: EvalResult, conn_id: int) -> None:
        with self._lock:
            key = None
            for k in list(self._in_flight):
                if k[1] == result.job_id and self._holders.get(k) == conn_id:
                    key = k
                    break
            if key is None:
                # late duplicate (job re-queued after timeout) or unknown id
                log.info("discarding duplicate/unknown result for job %d", result.job_id)
                return
            job, origin, _ = self._in_flight.pop(key)
            self._holders.pop(key, None)
            if key[0] == "local":
                if result.job_id not in self._results:
                    self._results[result.job_id] = result
            else:
                origin_chan = origin
                if origin_chan is not None:
                    try:
                        origin_chan.send(result.to_message())
                    except OSError:
                        log.warning("submitter for job %d went away", result.job_id)
            self._lock.notify_all()

    def _worker_session(self, chan: _LineChannel, conn_id: int) -> None:
        while True:
            msg = chan.recv()
            if msg is None:
                return
            if msg["type"] == "job_request":
                nxt = self._next_job(conn_id)
                if nxt is None:
                    chan.send({"type": "shutdown"})
                    return
                _, job = nxt
                chan.send(job.to_message())
            elif msg["type"] == "result":
                self._record_result(EvalResult.from_message(msg), conn_id)
            elif msg["type"] == "shutdown":
                return
            else:
                raise MalformedFrameError(f"unexpected {msg['type']} from worker")

    def _submitter_session(self, chan: _LineChannel, conn_id: int) -> None:
        while True:
            msg = chan.recv()
            if msg is None:
                return
            if msg["type"] == "job":
                job = EvalJob.from_message(msg)
                with self._lock:
                    self._pending.append(((f"conn{conn_id}", job.job_id), job, chan))
                    self._lock.notify_all()
            elif msg["type"] == "shutdown":
                return
            else:
                raise MalformedFrameError(f"unexpected {msg['type']} from submitter")


def serve(bind_address: str | None, job_source=None, result_sink=None,
          timeout: float = DEFAULT_JOB_TIMEOUT) -> EvalMaster:
    """Start a master.  With a job_source it completes when all jobs
    resolve (results also copied into result_sink if given); without one it
    runs as a standing broker until shutdown()."""
    jobs = list(job_source) if job_source is not None else None
    master = EvalMaster(bind_address, jobs=jobs, timeout=timeout).start()
    if jobs is not None and result_sink is not None:
        def _pump():
            results = master.wait()
            if hasattr(result_sink, "update"):
                result_sink.update(results)
            else:
                for r in results.values():
                    result_sink(r)
        threading.Thread(target=_pump, daemon=True, name="voxevo-sink").start()
    return master


def worker_loop(server_address: str, registry: MorphologyRegistry | None = None,
                worker_id: str | None = None, max_reconnect: int = 5,
                backoff: float = 0.2) -> int:
    """Pull jobs until the master says shutdown.  Connection loss triggers
    bounded exponential-backoff reconnects; returns the number of jobs
    completed."""
    registry = registry or MorphologyRegistry()
    worker_id = worker_id or f"worker-{os.getpid()}"
    attempts = 0
    done = 0
    while True:
        try:
            sock = socket.create_connection(parse_address(server_address), timeout=30.0)
        except OSError:
            attempts += 1
            if attempts > max_reconnect:
                log.error("%s: gave up after %d connection attempts", worker_id, attempts - 1)
                return done
            time.sleep(backoff * (2 ** (attempts - 1)))
            continue
        attempts = 0
        chan = _LineChannel(sock)
        try:
            chan.send({"type": "hello", "role": "worker", "worker_id": worker_id})
            while True:
                chan.send({"type": "job_request"})
                msg = chan.recv()
                if msg is None:
                    raise OSError("server closed the connection")
                if msg["type"] == "shutdown":
                    log.info("%s: shutdown received after %d jobs", worker_id, done)
                    return done
                if msg["type"] != "job":
                    raise MalformedFrameError(f"expected job, got {msg['type']}")
                result = execute_job(EvalJob.from_message(msg), registry, worker_id)
                chan.send(result.to_message())
                done += 1
        except (OSError, ProtocolError) as err:
            log.warning("%s: connection lost (%s); reconnecting", worker_id, err)
            attempts += 1
            if attempts > max_reconnect:
                log.error("%s: gave up after %d reconnects", worker_id, attempts - 1)
                return done
            time.sleep(backoff * (2 ** (attempts - 1)))
        finally:
            chan.close()


class RemoteEvaluator:
    """Submitter-side evaluation backend: streams one job per (controller,
    morphology) pair to a broker and folds the displacements back into
    per-controller fitnesses (mean over morphologies)."""

    def __init__(self, server_address: str, morphology_ids: list[str],
                 sim_params: SimParams | None = None, timeout: float = 600.0):
        self.server_address = server_address
        self.morphology_ids = list(morphology_ids)
        self.sim_overrides = _sim_param_overrides(sim_params) if sim_params else {}
        self.timeout = timeout
        self._job_seq = 0
        self._chan: _LineChannel | None = None

    def _channel(self) -> _LineChannel:
        if self._chan is None:
            sock = socket.create_connection(parse_address(self.server_address), timeout=30.0)
            self._chan = _LineChannel(sock)
            self._chan.send({"type": "hello", "role": "submitter"})
        return self._chan

    def close(self) -> None:
        if self._chan is not None:
            try:
                self._chan.send({"type": "shutdown"})
            except OSError:
                pass
            self._chan.close()
            self._chan = None

    def __call__(self, controllers) -> list[float]:
        chan = self._channel()
        slots: dict[int, tuple[int, int]] = {}
        for ci, controller in enumerate(controllers):
            text = serialize_controller(controller)
            for mi, mid in enumerate(self.morphology_ids):
                job = EvalJob(self._job_seq, mid, text, dict(self.sim_overrides))
                self._job_seq += 1
                slots[job.job_id] = (ci, mi)
                chan.send(job.to_message())
        per = [[None] * len(self.morphology_ids) for _ in controllers]
        got = 0
        deadline = time.monotonic() + self.timeout
        while got < len(slots):
            if time.monotonic() > deadline:
                raise TimeoutError(f"{len(slots) - got} evaluations still outstanding")
            msg = chan.recv()
            if msg is None:
                raise OSError("broker closed the connection")
            if msg["type"] != "result":
                raise MalformedFrameError(f"expected result, got {msg['type']}")
            result = EvalResult.from_message(msg)
            ci, mi = slots[result.job_id]
            if per[ci][mi] is None:
                per[ci][mi] = result.displacement
                got += 1
        return [sum(row) / len(row) for row in per]


def _sim_param_overrides(params: SimParams) -> dict:
    """Only non-default fields travel on the wire."""
    defaults = SimParams()
    out = {}
    for name in ("voxel_len", "stiffness", "damping", "mass", "actuation_amp",
                 "actuation_freq", "duration", "dt", "gravity"):
        v = getattr(params, name)
        if v != getattr(defaults, name):
            out[name] = v
    return out
