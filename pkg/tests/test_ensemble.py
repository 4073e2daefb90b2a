"""Unit tests for :mod:`ensemble` — settings, batching and the worker pool."""

import pytest

from fbmlab.ensemble import THREADS_ENV, Batch, SimulationSettings, map_batches, worker_count
from fbmlab.errors import ConfigurationError, DomainError


class TestSimulationSettings:
    """Validation and derived objects."""

    @pytest.mark.parametrize(
        "changes, match",
        [
            ({"n": 1}, "n must be"),
            ({"paths": 50}, "paths must be"),
            ({"seed": -1}, "seed must be"),
            ({"batch_size": 0}, "batch_size"),
            ({"threads": 0}, "threads"),
        ],
    )
    def test_invalid_values_raise(self, changes: dict, match: str) -> None:
        with pytest.raises(ConfigurationError, match=match):
            SimulationSettings(H=0.7, **changes)

    def test_invalid_hurst_raises(self) -> None:
        with pytest.raises(DomainError):
            SimulationSettings(H=1.2)

    def test_grid_follows_settings(self) -> None:
        settings = SimulationSettings(H=0.7, T=2.0, n=10, paths=100)
        assert settings.grid.T == 2.0
        assert settings.grid.n == 10
        assert settings.weights.w.shape == (11, 10)

    def test_evolve_returns_new_settings(self) -> None:
        settings = SimulationSettings(H=0.7, paths=100)
        other = settings.evolve(paths=200)
        assert other.paths == 200
        assert settings.paths == 100


class TestBatches:
    """Contiguous path ranges."""

    def test_batches_cover_every_path_once(self) -> None:
        settings = SimulationSettings(H=0.7, n=4, paths=1000, batch_size=300)
        batches = settings.batches()
        assert batches == [Batch(0, 300), Batch(300, 300), Batch(600, 300), Batch(900, 100)]
        assert sum(b.count for b in batches) == 1000

    def test_results_keep_batch_order(self) -> None:
        settings = SimulationSettings(H=0.7, n=4, paths=1000, batch_size=100, threads=4)
        assert map_batches(settings, lambda b: b.start) == list(range(0, 1000, 100))


class TestWorkerCount:
    """Pool size and the environment cap."""

    def test_requested_count_is_used(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.delenv(THREADS_ENV, raising=False)
        assert worker_count(3) == 3

    def test_environment_caps_workers(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv(THREADS_ENV, "2")
        assert worker_count(6) == 2

    def test_malformed_environment_raises(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv(THREADS_ENV, "many")
        with pytest.raises(ConfigurationError, match=THREADS_ENV):
            worker_count(2)
