"""Shared scenario runs.

The simulation scenarios are the expensive part of the suite, so each one
is run at most once per session and shared between the harness tests and
the acceptance criteria.
"""

import time

import pytest

from rfkernel import harness

REPLICATES = 20
GRID_CELLS = [(800, 20), (800, 40), (1600, 20), (1600, 40)]


class ScenarioCache:
    def __init__(self):
        self._results = {}
        self.elapsed = {}

    def get(self, setup, n, p, target="continuous", node_size_multiplier=1, replicates=REPLICATES):
        key = (setup, n, p, target, node_size_multiplier, replicates)
        if key not in self._results:
            config = harness.ScenarioConfig(setup, n, p, target, replicates=replicates,
                                            node_size_multiplier=node_size_multiplier, base_seed=0)
            start = time.perf_counter()
            self._results[key] = harness.run_scenario(config)
            self.elapsed[key] = time.perf_counter() - start
        return self._results[key]

    def seconds(self, setup, n, p, target="continuous", node_size_multiplier=1, replicates=REPLICATES):
        return self.elapsed[(setup, n, p, target, node_size_multiplier, replicates)]


@pytest.fixture(scope="session")
def scenarios():
    return ScenarioCache()
