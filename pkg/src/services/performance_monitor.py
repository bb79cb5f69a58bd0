"""
Timing and memory measurement for training runs and solver benchmarks
"""
import time
import tracemalloc
from dataclasses import dataclass
from statistics import median
from typing import Callable, List, Optional

import psutil

from src.core.logger import logger


@dataclass
class ProcessMetrics:
    """Process-level resource usage"""
    rss_mb: float


@dataclass
class TimingResult:
    """Median wall time of repeated calls, warm-up excluded"""
    median_ms: float
    samples_ms: List[float]


class RunMonitor:
    """Monotonic wall-clock laps and process metrics for one run"""

    def __init__(self):
        self.start_time = time.monotonic()
        self._last_lap = self.start_time
        self._process = psutil.Process()

    def lap_ms(self) -> float:
        """Milliseconds since the previous lap (or since construction)"""
        now = time.monotonic()
        elapsed = (now - self._last_lap) * 1000.0
        self._last_lap = now
        return elapsed

    def elapsed_ms(self) -> float:
        return (time.monotonic() - self.start_time) * 1000.0

    def process_metrics(self) -> ProcessMetrics:
        try:
            return ProcessMetrics(rss_mb=self._process.memory_info().rss / (1024 * 1024))
        except psutil.Error as e:
            logger.warning(f"Process metrics unavailable: {e}")
            return ProcessMetrics(rss_mb=0.0)


def time_calls(fn: Callable[[], object], reps: int, warmup: int = 1) -> TimingResult:
    """
    Time ``fn`` with a monotonic clock

    Args:
        fn: Zero-argument callable
        reps: Number of timed repetitions
        warmup: Untimed calls made first

    Returns:
        TimingResult with the median of the timed repetitions
    """
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(max(reps, 1)):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1000.0)
    return TimingResult(median_ms=float(median(samples)), samples_ms=samples)


def peak_memory_mib(fn: Callable[[], object]) -> Optional[float]:
    """Peak traced allocation (MiB) during one call; numpy buffers are traced"""
    already_tracing = tracemalloc.is_tracing()
    if not already_tracing:
        tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        base, _ = tracemalloc.get_traced_memory()
        fn()
        _, peak = tracemalloc.get_traced_memory()
        return max(peak - base, 0) / (1024 * 1024)
    finally:
        if not already_tracing:
            tracemalloc.stop()
