'''This module defines the classes related to monitoring fits and benchmark
runs: EvType, BenchmarkStats and Monitor.
'''
from enum import Enum
import time
from typing import List
from dataclasses import dataclass
import numpy as np


class EvType(Enum):
    '''Represents an event type'''
    FIT_START = 0
    LAMBDA_SELECTED = 1
    THETA_SELECTED = 2
    BACKFIT_ITER = 3
    BACKFIT_END = 4
    NOT_CONVERGED = 5
    REPLICATE_DONE = 6
    REPLICATE_FAILED = 7


@dataclass
class BenchmarkStats():
    """Statistics about a run"""

    """Number of fits started"""
    fits: int

    """Number of replicates that finished"""
    replicates_done: int

    """Number of replicates excluded because a fit failed"""
    replicates_failed: int

    """Number of fits that reached the iteration limit"""
    not_converged: int

    """Average number of backfitting iterations per fit"""
    avg_iterations: float

    """Maximum number of backfitting iterations of a fit"""
    max_iterations: int

    """Time used in the run"""
    run_time: float

    """Time used for computing the stats"""
    stats_time: float

    def __repr__(self):
        return (f'Fits: {self.fits}. '
                f'Replicates: Done: {self.replicates_done}. '
                f'Failed: {self.replicates_failed}.\n'
                f'Backfitting: Not converged: {self.not_converged}. '
                f'Average iterations: {self.avg_iterations:.2f}. '
                f'Max iterations: {self.max_iterations}\n'
                f'Run time: {self.run_time:.2f} s. '
                f'Stats time: {self.stats_time:.2f} s')


def time_to_str(t: float) -> str:
    fmt_str = "%H:%M.%S"
    return time.strftime(fmt_str, (time.localtime(t)))


class Monitor():
    '''Collects events and statistics of fits and benchmark runs.

    Events are stored as comma-separated strings: seconds since the monitor
    was created, the event type and the event fields.'''
    def __init__(self):
        self.events: List[str] = []  # List of events represented as strings

        self.created: float = time.time()
        self.run_start: float = 0
        self.run_end: float = 0

        self.fits: int = 0
        self.replicates_done: int = 0
        self.replicates_failed: int = 0
        self.not_converged: int = 0
        self.iterations: List[int] = []
        self.failures: List[str] = []

        self.prev_progress: float = 0

    def start_run(self):
        '''Indicate that the run has started. Records the start time'''
        self.run_start = time.time()
        self.prev_progress = 0

    def end_run(self):
        '''Indicate that the run has ended. Records the end time'''
        self.run_end = time.time()

    def add_event(self, ev: str):
        '''Receives an event as a string and stores it'''
        self.events.append(ev)

    def record(self, ev_type: EvType, *fields):
        '''Builds an event string from its type and fields and stores it'''
        now = time.time() - self.created
        values = ','.join(str(f) for f in fields)
        self.add_event(f'{now:.3f},{ev_type.value},{values}')

    def add_fit_start(self, label: str):
        self.fits += 1
        self.record(EvType.FIT_START, label)

    def add_fit_end(self, label: str, iterations: int, converged: bool):
        '''Stores the end of a backfitting run'''
        self.iterations.append(iterations)
        self.record(EvType.BACKFIT_END, label, iterations, int(converged))
        if not converged:
            self.not_converged += 1
            self.record(EvType.NOT_CONVERGED, label, iterations)

    def add_replicate_done(self, replicate: int, elapsed: float):
        self.replicates_done += 1
        self.record(EvType.REPLICATE_DONE, replicate, f'{elapsed:.3f}')

    def add_replicate_failed(self, replicate: int, reason: str):
        '''Stores a failed replicate. Commas are removed from the reason to
        keep the event parseable'''
        self.replicates_failed += 1
        reason = reason.replace(',', ';').replace('\n', ' ')
        self.failures.append(f'{replicate}: {reason}')
        self.record(EvType.REPLICATE_FAILED, replicate, reason)

    def print_progress(self, done: int, total: int):
        '''Prints the progress and the estimated finish time when it has
        advanced at least 0.5% since the last message'''
        progress = done * 100 / total
        if progress - self.prev_progress < 0.5:
            return
        self.prev_progress = progress

        now = time.time()
        elapsed = now - self.run_start
        remaining_time = (total - done) * elapsed / done

        now_str = time_to_str(now)
        finish_str = time_to_str(now + remaining_time)
        print(f'[{now_str}] {progress:6.2f}% Finish: {finish_str}',
              flush=True)

    def get_events(self) -> List[str]:
        '''Return the list of events'''
        return self.events

    def get_stats(self) -> BenchmarkStats:
        '''Obtain run statistics'''
        stats_start = time.time()

        if self.iterations:
            avg_iterations = float(np.mean(self.iterations))
            max_iterations = int(np.max(self.iterations))
        else:
            avg_iterations = 0
            max_iterations = 0

        stats_end = time.time()

        return BenchmarkStats(fits=self.fits,
                              replicates_done=self.replicates_done,
                              replicates_failed=self.replicates_failed,
                              not_converged=self.not_converged,
                              avg_iterations=avg_iterations,
                              max_iterations=max_iterations,
                              run_time=self.run_end - self.run_start,
                              stats_time=stats_end - stats_start)
