import numpy as np
import pytest

from corank.data import RatingsMatrix


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # Compile the jit kernels once so timed tests measure algorithms, not the jit.
    from corank.bench import warmup_kernels
    warmup_kernels()


def random_level_matrix(rng, n_users, n_items, per_user, n_levels=5):
    users = np.repeat(np.arange(n_users, dtype=np.int64), per_user)
    items = np.concatenate(
        [rng.choice(n_items, per_user, replace=False) for _ in range(n_users)])
    ratings = rng.integers(1, n_levels + 1, users.size).astype(np.float64)
    return RatingsMatrix(n_users, n_items, users, items, ratings, n_levels=n_levels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
