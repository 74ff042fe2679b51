from pathlib import Path

import numpy as np
import pytest

from socialrec.config import RunConfig
from socialrec.data import Dataset, split_dataset


# filled by the acceptance module, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_dataset(n_users=6, n_items=8, n_pairs=24, n_friends=4, seed=0) -> Dataset:
    """Small random dataset; every user keeps at least one training pair."""
    rng = np.random.default_rng(seed)
    codes = rng.choice(n_users * n_items, size=n_pairs, replace=False)
    pairs = np.column_stack([codes // n_items, codes % n_items])
    train, val, test = split_dataset(pairs, seed=seed)
    have = set(train[:, 0].tolist())
    extra = []
    for u in range(n_users):
        if u not in have:
            taken = set(map(tuple, np.concatenate([train, val, test]).tolist()))
            free = [i for i in range(n_items) if (u, i) not in taken]
            extra.append([u, free[0]])
    if extra:
        train = np.concatenate([train, np.array(extra)])
    edges = set()
    while len(edges) < n_friends:
        a, b = rng.choice(n_users, size=2, replace=False)
        edges.add((min(a, b), max(a, b)))
    e = np.array(sorted(edges))
    social = np.unique(np.concatenate([e, e[:, ::-1]]), axis=0)
    return Dataset(
        n_users, n_items, train.astype(np.int64), val.astype(np.int64), test.astype(np.int64),
        social.astype(np.int64), np.arange(100, 100 + n_users), np.arange(500, 500 + n_items), "toy",
    )


def write_lastfm(directory: Path, n_users=30, n_items=60, per_user=(3, 25), n_friends=60, seed=0):
    """HetRec-format ``user_artists.dat``/``user_friends.dat`` with clustered tastes."""
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    groups = rng.integers(0, 3, size=n_users)
    lines = ["userID\tartistID\tweight"]
    for u in range(n_users):
        k = rng.integers(per_user[0], per_user[1] + 1)
        lo = groups[u] * n_items // 3
        pool = np.concatenate([np.arange(lo, lo + n_items // 3), rng.integers(0, n_items, 5)])
        for a in np.unique(rng.choice(pool, size=k)):
            lines.append(f"{2 + 3 * u}\t{1000 + a}\t{rng.integers(1, 500)}")
    (directory / "user_artists.dat").write_text("\n".join(lines) + "\n")
    flines = ["userID\tfriendID"]
    for _ in range(n_friends):
        a = rng.integers(n_users)
        same = np.flatnonzero(groups == groups[a])
        b = rng.choice(same) if rng.random() < 0.8 else rng.integers(n_users)
        if a != b:
            flines.append(f"{2 + 3 * a}\t{2 + 3 * b}")
    (directory / "user_friends.dat").write_text("\n".join(flines) + "\n")
    return directory


@pytest.fixture
def toy():
    return random_dataset()


@pytest.fixture
def small_cfg():
    return RunConfig(dim=4, layers=2, svd_rank=2, gate_hidden=3, batch_size=8, eval_every=1, epochs=3, seed=1)
