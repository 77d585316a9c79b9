import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from qpolarimeter.engine import (
    Ack,
    Command,
    CommandError,
    EngineConfig,
    PolarimeterEngine,
    SourceState,
    apply_command,
    run_stream,
    source_density,
)
from qpolarimeter.measurement import build_measurement_matrix, canonical_settings
from qpolarimeter.quantum import (
    BELL_PHI_PLUS,
    KET_HH,
    concurrence,
    density_from_pure,
    fidelity,
)
from qpolarimeter.reconstruction import lls_reconstruct
from qpolarimeter.simlab import TimingProfile

FAST = EngineConfig(pacing="fast", seed=7)


class TestSourceModel:
    def test_theta_zero_is_separable(self):
        rho = source_density(SourceState(theta=0.0))
        assert np.allclose(rho.matrix, density_from_pure(KET_HH).matrix)

    def test_theta_eighth_pi_is_bell(self):
        rho = source_density(SourceState(theta=math.pi / 8))
        assert np.max(np.abs(rho.matrix - density_from_pure(BELL_PHI_PLUS).matrix)) <= 1e-12

    def test_depolarized_bell_concurrence(self):
        # (1-p) |phi+><phi+| + p I/4 has concurrence (3(1-p) - 1)/2 = 0.7 at p=0.2
        rho = source_density(SourceState(theta=math.pi / 8, depolarization=0.2))
        assert concurrence(rho) == pytest.approx(0.7, abs=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            SourceState(car=0.0)
        with pytest.raises(ValueError):
            SourceState(depolarization=1.5)


class TestApplyCommand:
    def test_set_theta_bumps_revision(self):
        state = SourceState()
        new = apply_command(state, Command("set_theta", math.pi / 8))
        assert new.theta == math.pi / 8
        assert new.revision == 1
        assert state.theta == 0.0

    def test_invalid_value_rejected(self):
        with pytest.raises(CommandError):
            apply_command(SourceState(), Command("set_car", "not-a-number"))

    def test_unknown_action_rejected(self):
        with pytest.raises(CommandError):
            apply_command(SourceState(), Command("set_phase", 1.0))


class TestEngineStream:
    def test_warmup_then_gapless_sequence(self):
        frames = list(run_stream(FAST, max_frames=25))
        assert [f.seq for f in frames] == list(range(25))
        # warm-up: first frame only after window_m records
        assert frames[0].window == tuple(range(9))
        assert frames[1].window == tuple(range(1, 10))

    def test_window_holds_most_recent_records(self):
        config = EngineConfig(pacing="fast", seed=1, window_m=18)
        frames = list(run_stream(config, max_frames=5))
        for i, frame in enumerate(frames):
            assert frame.window == tuple(range(i, i + 18))
            assert frame.window_m == 18

    def test_frames_match_scratch_reconstruction(self):
        config = EngineConfig(pacing="fast", seed=42, window_m=9)
        frames = list(PolarimeterEngine(config).frames(max_frames=12))
        records = {}
        # replay with an identical engine, capturing records via the window ids
        engine2 = PolarimeterEngine(config)
        frames2 = []
        for frame in engine2.frames(max_frames=12):
            frames2.append(frame)
            for rec in engine2._window:
                records[rec.uid] = rec
        matrix = build_measurement_matrix(canonical_settings(9, dwell=config.timing.tau_m))
        for f1, f2 in zip(frames, frames2):
            assert np.array_equal(f1.rho.matrix, f2.rho.matrix)  # bit-reproducible
            window_records = [records[u] for u in f2.window]
            scratch = lls_reconstruct(matrix, window_records)
            assert np.array_equal(f2.rho.matrix, scratch.rho.matrix)

    def test_metrics_come_from_frame_state(self):
        frames = list(run_stream(EngineConfig(pacing="fast", seed=3), max_frames=3))
        for f in frames:
            assert 0.0 <= f.fidelity_to_target <= 1.0
            assert 0.25 - 1e-9 <= f.purity <= 1.0 + 1e-9
            assert 0.0 <= f.concurrence <= 1.0

    def test_duration_limit_uses_simulated_clock(self):
        config = EngineConfig(pacing="fast", seed=0, window_m=9)
        frames = list(run_stream(config, duration=3.0))
        # 3 s at 0.1 s per measurement = 30 records, minus 8 warm-up
        assert len(frames) == 22
        assert frames[-1].emit_time <= 3.0 + 1e-9


class TestSteering:
    def test_set_theta_applies_at_next_frame(self):
        engine = PolarimeterEngine(EngineConfig(pacing="fast", seed=5))
        gen = engine.frames(max_frames=6)
        first = next(gen)
        assert first.source.theta == 0.0
        acks = []
        engine.submit(Command("set_theta", math.pi / 8, req_id="r1"), acks.append)
        second = next(gen)
        assert second.source.theta == math.pi / 8
        assert acks == [Ack("r1", applied_seq=second.seq)]

    def test_bad_command_rejected_without_state_change(self):
        engine = PolarimeterEngine(EngineConfig(pacing="fast", seed=5))
        gen = engine.frames(max_frames=4)
        next(gen)
        acks = []
        engine.submit(Command("set_window", 7, req_id="bad"), acks.append)
        frame = next(gen)
        assert acks[0].error is not None
        assert acks[0].applied_seq is None
        assert frame.window_m == 9

    def test_window_change_resets_warmup(self):
        engine = PolarimeterEngine(EngineConfig(pacing="fast", seed=5))
        gen = engine.frames(max_frames=40)
        first = next(gen)
        assert first.window_m == 9
        engine.submit(Command("set_window", 36))
        # next frame appears only after 36 fresh records
        second = next(gen)
        assert second.window_m == 36
        assert len(second.window) == 36
        assert second.seq == first.seq + 1
        assert min(second.window) > first.window[-1]

    def test_pause_preserves_window(self):
        engine = PolarimeterEngine(EngineConfig(pacing="fast", seed=5))
        gen = engine.frames(max_frames=10)
        first = next(gen)
        engine.submit(Command("pause"))
        engine.submit(Command("resume"))
        second = next(gen)
        assert second.seq == first.seq + 1
        assert second.window[-1] == first.window[-1] + 1

    def test_theta_ramp_raises_concurrence_monotonically(self):
        config = EngineConfig(pacing="fast", seed=11, window_m=36)
        engine = PolarimeterEngine(config)
        gen = engine.frames(max_frames=300)
        trace = []
        for k, frame in enumerate(gen):
            trace.append(frame.concurrence)
            engine.submit(Command("set_theta", (math.pi / 8) * min(1.0, (k + 1) / 250)))
        rho_s, _ = spearmanr(np.arange(len(trace)), trace)
        assert trace[0] <= 0.2
        assert max(trace[-20:]) >= 0.9
        assert rho_s > 0.9

    def test_static_source_precision(self):
        # 36-record rolling window over a steady source
        config = EngineConfig(pacing="fast", seed=13, window_m=36)
        frames = list(run_stream(config, SourceState(theta=0.0), duration=60.0))
        fids = [f.fidelity_to_target for f in frames]
        assert np.mean(fids) >= 0.96
        config2 = EngineConfig(pacing="fast", seed=14, window_m=36)
        frames2 = list(run_stream(config2, SourceState(theta=math.pi / 8), duration=60.0))
        fids2 = [f.fidelity_to_target for f in frames2]
        assert np.mean(fids2) >= 0.92

    def test_set_target_changes_reference(self):
        engine = PolarimeterEngine(EngineConfig(pacing="fast", seed=5))
        gen = engine.frames(max_frames=4)
        next(gen)
        engine.submit(Command("set_target", "phi+"))
        frame = next(gen)
        # theta=0 source measured against phi+ target: fidelity near 0.5
        assert frame.fidelity_to_target == pytest.approx(0.5, abs=0.1)


class TestRealtimePacing:
    def test_frame_cadence(self):
        timing = TimingProfile(m=9, tau_m=0.01, tau_s=0.002, tau_a=0.001)
        config = EngineConfig(timing=timing, pacing="realtime", seed=2)
        engine = PolarimeterEngine(config)
        start = time.monotonic()
        frames = list(engine.frames(max_frames=30))
        elapsed = time.monotonic() - start
        # 38 measurements (9 warm-up) at 12 ms each
        expected = 39 * 0.012
        assert frames[-1].seq == 29
        assert elapsed == pytest.approx(expected, rel=0.25)
