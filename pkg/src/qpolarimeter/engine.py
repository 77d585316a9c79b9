"""The live polarimeter: steerable source, setting scheduler, rolling window.

One acquisition loop owns the simulated source and the record window.  The
loop cycles the nine canonical analyzer settings; after every dwell it
simulates one CountRecord against the current source, pushes it into the
window, reconstructs from the most recent window_m records, and emits a
Frame.  Nothing is emitted until the window has filled (warm-up).

Control commands arrive through a thread-safe queue from any number of
producers and take effect at the next dwell boundary, modeling an analyzer
that cannot change mid-integration.  Each command is acknowledged with the
frame sequence number at which it applied, or rejected with a reason.

In ``realtime`` pacing the loop sleeps so that one measurement (dwell plus
switch) elapses per step of wall time; in ``fast`` pacing it free-runs.
The emitted timestamps always advance on the simulated acquisition clock,
so a fast-pacing run with a fixed seed is bit-reproducible.
"""

from __future__ import annotations

import math
import queue
import time
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Iterator

import numpy as np

from .measurement import NoiseModel, build_measurement_matrix, canonical_settings, perturb_projectors
from .quantum import (
    BELL_PHI_MINUS,
    BELL_PHI_PLUS,
    BELL_PSI_MINUS,
    BELL_PSI_PLUS,
    KET_HH,
    KET_VV,
    DensityMatrix,
    PureState2Q,
    concurrence,
    density_from_pure,
    fidelity,
    purity,
)
from .reconstruction import lls_reconstruct
from .simlab import PRESET_PROFILES, TimingProfile

__all__ = [
    "SourceState",
    "EngineConfig",
    "Frame",
    "Command",
    "Ack",
    "CommandError",
    "TARGET_STATES",
    "source_density",
    "apply_command",
    "PolarimeterEngine",
    "run_stream",
]

#: Selectable reference states for the fidelity readout.
TARGET_STATES: dict[str, PureState2Q] = {
    "HH": KET_HH,
    "VV": KET_VV,
    "phi+": BELL_PHI_PLUS,
    "phi-": BELL_PHI_MINUS,
    "psi+": BELL_PSI_PLUS,
    "psi-": BELL_PSI_MINUS,
}


class CommandError(ValueError):
    """A control command was rejected; the engine state is unchanged."""


@dataclass(frozen=True)
class SourceState:
    """Knobs of the simulated entangled-photon source.

    theta is the wave-plate angle in radians steering the emitted state
    cos(2θ)|HH> + sin(2θ)|VV> (θ=0 separable, θ=π/8 maximally entangled);
    depolarization mixes in the maximally mixed state.  revision counts
    applied control commands.
    """

    theta: float = 0.0
    car: float = 3.0
    pair_rate: float = 1.0e6
    depolarization: float = 0.0
    revision: int = 0

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")
        if not self.car > 0:
            raise ValueError("car must be positive")
        if self.pair_rate < 0:
            raise ValueError("pair_rate must be nonnegative")
        if not 0.0 <= self.depolarization <= 1.0:
            raise ValueError("depolarization must be in [0, 1]")


def source_density(state: SourceState) -> DensityMatrix:
    """The emitted state (1-p)|psi(theta)><psi(theta)| + p I/4."""
    c, s = math.cos(2.0 * state.theta), math.sin(2.0 * state.theta)
    psi = np.array([c, 0.0, 0.0, s], dtype=complex)
    pure = np.outer(psi, psi.conj())
    p = state.depolarization
    return DensityMatrix((1.0 - p) * pure + p * np.eye(4) / 4.0)


@dataclass(frozen=True)
class EngineConfig:
    """Static configuration of one acquisition loop."""

    timing: TimingProfile = PRESET_PROFILES["polarimeter"]
    window_m: int = 9
    pacing: str = "fast"
    seed: int = 0
    subtract_accidentals: bool = True
    randomize_order: bool = False
    dark_rate: float = 0.0
    gate_rate: float = 50.0e6
    systematic_angle: float = 0.0
    target: str = "auto"

    def __post_init__(self):
        if self.window_m <= 0 or self.window_m % 9 != 0:
            raise ValueError("window_m must be a positive multiple of 9")
        if self.pacing not in ("realtime", "fast"):
            raise ValueError("pacing must be 'realtime' or 'fast'")
        if self.target != "auto" and self.target not in TARGET_STATES:
            raise ValueError(f"unknown target {self.target!r}")


@dataclass(frozen=True)
class Frame:
    """One polarimeter output: the reconstructed state plus derived metrics."""

    seq: int
    rho: DensityMatrix
    fidelity_to_target: float
    purity: float
    concurrence: float
    window: tuple[int, ...]
    window_m: int
    solve_time: float
    emit_time: float
    source: SourceState
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class Command:
    action: str
    value: float | int | str | None = None
    req_id: str | None = None


@dataclass(frozen=True)
class Ack:
    req_id: str | None
    applied_seq: int | None = None
    error: str | None = None


def apply_command(state: SourceState, command: Command) -> SourceState:
    """Pure source-state transition for the source-level commands.

    Raises :class:`CommandError` on out-of-range values; the input state is
    never mutated.  Engine-level commands (window, pause, target) are
    handled by the engine itself.
    """
    try:
        if command.action == "set_theta":
            return replace(state, theta=float(command.value), revision=state.revision + 1)
        if command.action == "set_car":
            return replace(state, car=float(command.value), revision=state.revision + 1)
        if command.action == "set_rate":
            return replace(state, pair_rate=float(command.value), revision=state.revision + 1)
    except (TypeError, ValueError) as exc:
        raise CommandError(f"{command.action}: {exc}") from exc
    raise CommandError(f"unknown source command {command.action!r}")


class PolarimeterEngine:
    """Single acquisition loop; see the module docstring for the contract."""

    def __init__(self, config: EngineConfig, source: SourceState | None = None):
        self.config = config
        self._source = source if source is not None else SourceState()
        self._commands: queue.Queue = queue.Queue()
        self._rng = np.random.default_rng(np.random.SeedSequence(config.seed))
        self._settings = canonical_settings(9, dwell=config.timing.tau_m)
        self._matrix = build_measurement_matrix(self._settings)
        if config.systematic_angle > 0:
            # static analyzer misalignment: simulate with it, reconstruct without
            self._true_settings = perturb_projectors(
                self._settings, config.systematic_angle, self._rng
            )
        else:
            self._true_settings = self._settings
        self._window_m = config.window_m
        self._window: deque = deque(maxlen=self._window_m)
        self._paused = False
        self._target = config.target
        self._seq = 0
        self._uid = 0
        self._clock = 0.0
        self._last_rho: DensityMatrix | None = None

    # -- control -------------------------------------------------------------

    def submit(self, command: Command, reply: Callable[[Ack], None] | None = None) -> None:
        """Queue a command; ``reply`` (if given) receives exactly one Ack."""
        self._commands.put((command, reply))

    @property
    def source(self) -> SourceState:
        return self._source

    @property
    def window_m(self) -> int:
        return self._window_m

    def _ack(self, reply, ack: Ack) -> None:
        if reply is not None:
            reply(ack)

    def _apply(self, command: Command, reply) -> None:
        try:
            if command.action in ("set_theta", "set_car", "set_rate"):
                self._source = apply_command(self._source, command)
            elif command.action == "set_window":
                m = int(command.value)
                if m <= 0 or m % 9 != 0:
                    raise CommandError("window must be a positive multiple of 9")
                self._window_m = m
                self._window = deque(maxlen=m)  # warm-up restarts
            elif command.action == "pause":
                self._paused = True
            elif command.action == "resume":
                self._paused = False
            elif command.action == "set_target":
                value = str(command.value)
                if value != "auto" and value not in TARGET_STATES:
                    raise CommandError(f"unknown target {value!r}")
                self._target = value
            else:
                raise CommandError(f"unknown command {command.action!r}")
        except (CommandError, TypeError, ValueError) as exc:
            self._ack(reply, Ack(command.req_id, error=str(exc)))
            return
        self._ack(reply, Ack(command.req_id, applied_seq=self._seq))

    def _drain_commands(self, block: bool) -> None:
        while True:
            try:
                command, reply = self._commands.get(block=block, timeout=0.05 if block else None)
            except queue.Empty:
                return
            self._apply(command, reply)
            block = self._paused  # keep waiting while paused

    # -- acquisition ---------------------------------------------------------

    def _noise(self) -> NoiseModel:
        return NoiseModel(
            pair_rate=self._source.pair_rate,
            car=self._source.car,
            dark_rate=self.config.dark_rate,
            gate_rate=self.config.gate_rate,
            eta=self.config.timing.eta,
        )

    def _target_density(self) -> DensityMatrix:
        if self._target == "auto":
            return source_density(replace(self._source, depolarization=0.0))
        return density_from_pure(TARGET_STATES[self._target])

    def frames(self, max_frames: int | None = None, duration: float | None = None) -> Iterator[Frame]:
        """Yield frames until ``max_frames`` emitted or simulated ``duration`` s."""
        from .measurement import simulate_counts

        timing = self.config.timing
        step_period = timing.tau_m + timing.tau_s
        realtime = self.config.pacing == "realtime"
        deadline = time.monotonic()
        emitted = 0
        step = 0
        order = list(range(9))
        rho_true = source_density(self._source)
        source_rev = self._source.revision

        while True:
            self._drain_commands(block=self._paused)
            if self._paused:
                continue
            if duration is not None and self._clock + step_period > duration + 1e-12:
                return

            if self.config.randomize_order and step % 9 == 0:
                order = list(self._rng.permutation(9))
            idx = order[step % 9]
            step += 1

            if self._source.revision != source_rev:
                rho_true = source_density(self._source)
                source_rev = self._source.revision

            if realtime:
                deadline += step_period
                pause_for = deadline - time.monotonic()
                if pause_for > 0:
                    time.sleep(pause_for)
                elif pause_for < -step_period:
                    # fell behind (e.g. resumed from pause): re-anchor, no burst
                    deadline = time.monotonic()

            self._clock += step_period
            record = simulate_counts(
                rho_true,
                self._true_settings[idx],
                self._noise(),
                self._rng,
                timestamp=self._clock,
                uid=self._uid,
            )
            self._uid += 1
            self._window.append(record)
            if len(self._window) < self._window_m:
                continue

            flags: tuple[str, ...]
            try:
                report = lls_reconstruct(
                    self._matrix,
                    list(self._window),
                    subtract_accidentals=self.config.subtract_accidentals,
                )
                rho, solve_time, flags = report.rho, report.solve_time, report.flags
                self._last_rho = rho
            except ValueError:
                if self._last_rho is None:
                    continue
                rho, solve_time, flags = self._last_rho, 0.0, ("carried_forward",)

            target = self._target_density()
            frame = Frame(
                seq=self._seq,
                rho=rho,
                fidelity_to_target=fidelity(rho, target),
                purity=purity(rho),
                concurrence=concurrence(rho),
                window=tuple(r.uid for r in self._window),
                window_m=self._window_m,
                solve_time=solve_time,
                emit_time=self._clock,
                source=self._source,
                flags=flags,
            )
            self._seq += 1
            emitted += 1
            yield frame
            if max_frames is not None and emitted >= max_frames:
                return


def run_stream(
    config: EngineConfig,
    source: SourceState | None = None,
    max_frames: int | None = None,
    duration: float | None = None,
) -> Iterator[Frame]:
    """Convenience wrapper: build an engine and yield its ordered frame feed."""
    return PolarimeterEngine(config, source).frames(max_frames=max_frames, duration=duration)
