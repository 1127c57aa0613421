"""Child-process simulators speaking the "sl-sim/1" wire protocol.

A simulator written in any language can serve simulations over pipes:

* on start, the child writes one JSON line
  ``{"protocol": "sl-sim/1", "d": <int>, "p": <int>}``;
* for each request line ``{"seed": <int>, "theta": [...]}`` it replies with
  one line ``{"summary": [...]}`` of length d.

Requests are synchronous.  Each worker thread owns one child process,
reused across requests, so a run needs exactly ``workers`` children.
"""

from __future__ import annotations

import json
import os
import select
import subprocess
import threading
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SimulationError
from .model import Model

__all__ = ["PROTOCOL", "ExternalSimulatorSpec", "ExternalSimulatorPool", "external_simulate", "external_model"]

PROTOCOL = "sl-sim/1"

_MAX_LINE = 64 * 1024 * 1024


@dataclass(frozen=True)
class ExternalSimulatorSpec:
    """How to launch an external simulator.

    Parameters
    ----------
    command : tuple of str
        Executable and arguments.
    timeout : float
        Seconds allowed per handshake or simulation reply.
    """

    command: tuple[str, ...]
    timeout: float = 30.0

    def __post_init__(self):
        command = tuple(str(part) for part in self.command)
        if not command:
            raise ConfigError("external simulator command must be non-empty")
        object.__setattr__(self, "command", command)
        if not self.timeout > 0:
            raise ConfigError("external simulator timeout must be positive")


class _Child:
    """One external simulator process with line-based request/reply."""

    def __init__(self, spec: ExternalSimulatorSpec):
        self.spec = spec
        try:
            self.proc = subprocess.Popen(
                list(spec.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
            )
        except OSError as exc:
            raise SimulationError(0, f"cannot launch {spec.command[0]!r}: {exc}") from exc
        self._buffer = b""
        header = self._read_line("handshake")
        try:
            info = json.loads(header)
            if info.get("protocol") != PROTOCOL:
                raise ValueError(f"unexpected protocol {info.get('protocol')!r}")
            self.d = int(info["d"])
            self.p = int(info["p"])
        except (ValueError, KeyError, TypeError) as exc:
            self.close()
            raise SimulationError(0, f"bad handshake {header[:200]!r}: {exc}") from exc
        if self.d < 1 or self.p < 1:
            self.close()
            raise SimulationError(0, f"handshake dimensions d={self.d}, p={self.p} invalid")

    def _exit_code(self):
        # EOF on stdout usually races the process teardown; wait briefly so
        # error messages carry the real exit code instead of None.
        try:
            return self.proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            return None

    def _read_line(self, what: str) -> bytes:
        fd = self.proc.stdout.fileno()
        deadline = time.monotonic() + self.spec.timeout
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise SimulationError(0, f"timeout waiting for {what}")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise SimulationError(0, f"timeout waiting for {what}")
            chunk = os.read(fd, 65536)
            if not chunk:
                raise SimulationError(0, f"simulator exited (code {self._exit_code()}) during {what}")
            self._buffer += chunk
            if len(self._buffer) > _MAX_LINE:
                raise SimulationError(0, f"oversized reply while reading {what}")
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def simulate(self, theta: np.ndarray, seed: int) -> np.ndarray:
        request = json.dumps({"seed": int(seed), "theta": [float(v) for v in np.atleast_1d(theta)]})
        try:
            self.proc.stdin.write(request.encode() + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SimulationError(0, f"simulator pipe closed (exit code {self._exit_code()})") from exc
        reply = self._read_line("simulation reply")
        try:
            payload = json.loads(reply)
            summary = np.asarray(payload["summary"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise SimulationError(0, f"malformed reply {reply[:200]!r}: {exc}") from exc
        if summary.ndim != 1 or summary.shape[0] != self.d:
            raise SimulationError(
                0, f"summary length {summary.shape} != ({self.d},) in reply {reply[:200]!r}"
            )
        return summary

    def close(self) -> None:
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                if stream is not None:
                    stream.close()
            except OSError:
                pass
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class ExternalSimulatorPool:
    """Thread-local child processes for one simulator spec.

    The first child is started eagerly so the summary/parameter dimensions
    are known before any run begins.
    """

    def __init__(self, spec: ExternalSimulatorSpec):
        self.spec = spec
        self._local = threading.local()
        self._children: list[_Child] = []
        self._lock = threading.Lock()
        self._closed = False
        first = self._child()
        self.d = first.d
        self.p = first.p

    def _child(self) -> _Child:
        child = getattr(self._local, "child", None)
        if child is None:
            if self._closed:
                raise SimulationError(0, "simulator pool is closed")
            child = _Child(self.spec)
            self._local.child = child
            with self._lock:
                self._children.append(child)
        return child

    def simulate(self, theta, seed: int) -> np.ndarray:
        child = self._child()
        summary = child.simulate(theta, seed)
        if child.d != self.d:
            raise SimulationError(0, f"child d={child.d} differs from pool d={self.d}")
        return summary

    def close(self) -> None:
        with self._lock:
            self._closed = True
            children, self._children = self._children, []
        for child in children:
            child.close()

    def __enter__(self) -> "ExternalSimulatorPool":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def external_simulate(spec: ExternalSimulatorSpec, theta, seed: int) -> np.ndarray:
    """One simulation through a transient child (testing convenience).

    Runs use :class:`ExternalSimulatorPool` (via :func:`external_model`)
    so children are reused; this helper pays a process start per call.
    """
    with ExternalSimulatorPool(spec) as pool:
        return pool.simulate(theta, seed)


def _identity_summary(dataset) -> np.ndarray:
    return np.asarray(dataset, dtype=np.float64)


def external_model(
    spec: ExternalSimulatorSpec,
    theta0,
    log_prior=None,
    bounds=None,
    check: bool = True,
) -> tuple[Model, ExternalSimulatorPool]:
    """Wrap an external simulator as a Model.

    The child's reply is already the summary vector, so the model's
    summarize step is the identity.  The per-simulation wire seed is the
    first 63-bit draw of the simulation's own random stream, which keeps
    external runs exactly as reproducible as in-process ones.

    Returns the model together with its process pool; close the pool when
    the run is over.
    """
    pool = ExternalSimulatorPool(spec)
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=np.float64))
    if theta0.shape[0] != pool.p:
        pool.close()
        raise ConfigError(
            f"theta0 has length {theta0.shape[0]} but the simulator declared p={pool.p}"
        )

    def simulate(gen: np.random.Generator, theta, **_ignored):
        return pool.simulate(theta, int(gen.integers(1 << 63)))

    model = Model(
        simulate=simulate,
        summarize=_identity_summary,
        theta0=theta0,
        log_prior=log_prior,
        bounds=bounds,
        name=f"external:{os.path.basename(spec.command[0])}",
        check=check,
    )
    if model.d is not None and model.d != pool.d:
        pool.close()
        raise ConfigError(f"smoke test summaries have d={model.d}, handshake said {pool.d}")
    model.d = pool.d
    return model, pool
