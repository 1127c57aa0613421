"""Model abstraction: simulator + summary function + prior + start point."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ModelValidationError
from .rng import RngStream, probe_stream

__all__ = ["Model", "flat_log_prior"]


def flat_log_prior(theta: np.ndarray) -> float:
    """Improper flat prior: every parameter value has log-density 0."""
    return 0.0


def as_generator(rng) -> np.random.Generator:
    """Accept either an RngStream or a ready numpy Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


@dataclass
class Model:
    """Bundle of simulator, summary function, prior, and starting point.

    Parameters
    ----------
    simulate : callable
        ``simulate(rng, theta, **sim_args) -> dataset``.  ``rng`` is a
        ``numpy.random.Generator`` positioned at the start of the stream
        reserved for that one simulation.
    summarize : callable
        ``summarize(dataset, **sum_args) -> 1-d array`` of length d.
    theta0 : array_like
        Starting parameter, length p.
    log_prior : callable, optional
        ``log_prior(theta) -> float`` (may be ``-inf``, never ``+inf``).
        Defaults to an improper flat prior.
    simulate_batch : callable, optional
        ``simulate_batch(stream, n, theta, **sim_args) -> list of datasets``.
        ``stream`` is the batch-parent :class:`~synlike.rng.RngStream`; the
        j-th returned dataset MUST equal what ``simulate`` would produce
        from ``stream.child(j)``, so batching never changes results.
    bounds : array_like, optional
        ``(p, 2)`` matrix of (lower, upper) support bounds, entries may be
        ``±inf``.  Used for the logit reparameterisation.
    sim_args, sum_args : dict, optional
        Extra keyword arguments forwarded to ``simulate``/``summarize``.
    name : str
        Label used in artifacts and messages.
    check : bool
        Run the construction smoke test (default True).  Pass False for
        expensive simulators that are validated elsewhere.
    """

    simulate: Callable[..., Any]
    summarize: Callable[..., Any]
    theta0: np.ndarray
    log_prior: Callable[[np.ndarray], float] = flat_log_prior
    simulate_batch: Callable[..., Any] | None = None
    bounds: np.ndarray | None = None
    sim_args: Mapping[str, Any] = field(default_factory=dict)
    sum_args: Mapping[str, Any] = field(default_factory=dict)
    name: str = "model"
    check: bool = True
    d: int | None = field(default=None, compare=False)

    def __post_init__(self):
        self.theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=np.float64))
        if self.theta0.ndim != 1:
            raise ModelValidationError("theta0 must be a vector")
        if not np.all(np.isfinite(self.theta0)):
            raise ModelValidationError("theta0 must be finite")
        if self.log_prior is None:
            self.log_prior = flat_log_prior
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=np.float64)
            if b.shape != (self.p, 2):
                raise ModelValidationError(
                    f"bounds must have shape ({self.p}, 2), got {b.shape}"
                )
            if np.any(b[:, 0] >= b[:, 1]):
                raise ModelValidationError("bounds must satisfy lower < upper")
            self.bounds = b
        if self.check:
            self.run_smoke_test()

    @property
    def p(self) -> int:
        """Parameter dimension."""
        return int(self.theta0.shape[0])

    def summary_of(self, rng, theta) -> np.ndarray:
        """One simulation followed by its summary, as a float64 vector."""
        dataset = self.simulate(as_generator(rng), np.asarray(theta), **self.sim_args)
        summary = np.asarray(self.summarize(dataset, **self.sum_args), dtype=np.float64)
        return np.atleast_1d(summary)

    def run_smoke_test(self, trials: int = 10, master_seed: int = 0) -> None:
        """Simulate a few times and verify the summaries are well-formed.

        Raises
        ------
        ModelValidationError
            If the prior excludes ``theta0``, any trial fails, a summary is
            non-finite, or the summary length varies across trials.
        """
        if self.log_prior(self.theta0) == -np.inf:
            raise ModelValidationError("log_prior(theta0) is -inf")
        parent = probe_stream(master_seed)
        d = self.d
        for j in range(trials):
            try:
                summary = self.summary_of(parent.child(j), self.theta0)
            except Exception as exc:
                raise ModelValidationError(
                    f"trial simulation {j} failed: {exc}"
                ) from exc
            if summary.ndim != 1:
                raise ModelValidationError("summaries must be 1-d vectors")
            if not np.all(np.isfinite(summary)):
                raise ModelValidationError(f"trial {j} produced non-finite summaries")
            if d is None:
                d = summary.shape[0]
            elif summary.shape[0] != d:
                raise ModelValidationError(
                    f"inconsistent summary length: {summary.shape[0]} vs {d}"
                )
        self.d = int(d) if d is not None else None
