import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "softsim",
    derandomize=True,
    max_examples=100,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("softsim")

# Shared on-disk store for generated task caches so repeated test runs skip the
# (deterministic) settle work.  Delete the directory to force a rebuild.
CACHE_DIR = os.path.join(os.path.dirname(__file__), "_cache")

TEST_MASTER_SEED = 7
TEST_SCALE = 4  # particle-count divisor keeping settle times test-sized
TEST_COUNTS = {
    "TransportWater": 10,
    "PourWater": 10,
    "PourWaterAmount": 10,
    "StraightenRope": 10,
    "RopeConfiguration": 10,
    "SpreadCloth": 5,
    "FoldCloth": 5,
    "FoldCrumpledCloth": 5,
    "DropCloth": 5,
    "DropFoldCloth": 5,
}


def build_test_cache(task: str):
    """Generate (once) and load the shared desk-scale cache for a task."""
    from softsim.cache_io import load_cache, write_cache
    from softsim.tasks import task_spec
    from softsim.variations import generate_all

    os.makedirs(CACHE_DIR, exist_ok=True)
    path = os.path.join(CACHE_DIR, f"{task}.cache")
    if not os.path.exists(path):
        spec = task_spec(task)
        variations = list(
            generate_all(task, TEST_MASTER_SEED, TEST_COUNTS[task], scale=TEST_SCALE)
        )
        write_cache(path, spec.kind_id, TEST_MASTER_SEED, variations)
    return load_cache(path)


@pytest.fixture(scope="session")
def task_cache():
    return build_test_cache
