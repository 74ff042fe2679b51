"""Dataset loading (LastFM HetRec, Ciao), splitting, validation and caching."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .graph import SparseMatrix

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Re-indexed implicit-feedback data plus an undirected social graph.

    ``train``/``val``/``test`` are ``(n, 2)`` int arrays of (user, item);
    ``social`` lists every undirected edge in both directions. ``user_ids``
    and ``item_ids`` map dense indices back to raw ids.
    """

    n_users: int
    n_items: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    social: np.ndarray
    user_ids: np.ndarray
    item_ids: np.ndarray
    name: str = "custom"

    def split(self, which: str) -> np.ndarray:
        if which not in SPLITS:
            raise ValueError(f"unknown split {which!r}")
        return getattr(self, which)

    def interaction_matrix(self, which: str | tuple[str, ...] = "train") -> SparseMatrix:
        parts = (which,) if isinstance(which, str) else which
        pairs = np.concatenate([self.split(p) for p in parts]) if parts else np.zeros((0, 2), np.int64)
        return SparseMatrix.from_coo(pairs[:, 0], pairs[:, 1], 1.0, (self.n_users, self.n_items))

    def social_matrix(self) -> SparseMatrix:
        return SparseMatrix.from_coo(self.social[:, 0], self.social[:, 1], 1.0, (self.n_users, self.n_users))

    def train_degree(self) -> np.ndarray:
        return np.bincount(self.train[:, 0], minlength=self.n_users)

    def social_degree(self) -> np.ndarray:
        return np.bincount(self.social[:, 0], minlength=self.n_users)

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.n_users},{self.n_items};".encode())
        for arr in (self.train, self.val, self.test, self.social, self.user_ids, self.item_ids):
            a = np.ascontiguousarray(arr, dtype="<i8")
            h.update(str(a.shape).encode())
            h.update(a.tobytes())
        return h.hexdigest()

    def summary(self) -> dict:
        return {
            "name": self.name,
            "users": self.n_users,
            "items": self.n_items,
            "interactions": int(len(self.train) + len(self.val) + len(self.test)),
            "social_edges": int(len(self.social) // 2),
            "train": int(len(self.train)),
            "val": int(len(self.val)),
            "test": int(len(self.test)),
            "fingerprint": self.fingerprint,
        }


# ---------------------------------------------------------------------------
# raw readers
# ---------------------------------------------------------------------------


def _read_int_rows(path: Path, min_cols: int, header: bool, sep: str | None = None) -> np.ndarray:
    """Integer table from a text file; malformed rows raise with the line number."""
    if not path.is_file():
        raise DataError(f"missing input file: {path}")
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if header and lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            fields = line.split(sep) if sep else line.replace(",", " ").split()
            if len(fields) < min_cols:
                raise DataError(f"{path}:{lineno}: expected {min_cols} fields, got {len(fields)}")
            try:
                rows.append([int(f) for f in fields])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer field in {line!r}") from None
    width = min(len(r) for r in rows) if rows else min_cols
    return np.array([r[:width] for r in rows], dtype=np.int64).reshape(-1, width)


def _assemble(pairs_raw: np.ndarray, edges_raw: np.ndarray) -> tuple:
    """Dense re-indexing (sorted raw ids), dedup and symmetrization."""
    user_ids = np.unique(np.concatenate([pairs_raw[:, 0], edges_raw.reshape(-1)]))
    item_ids = np.unique(pairs_raw[:, 1])
    users = np.searchsorted(user_ids, pairs_raw[:, 0])
    items = np.searchsorted(item_ids, pairs_raw[:, 1])
    pairs = np.unique(np.column_stack([users, items]), axis=0)
    if len(edges_raw):
        a = np.searchsorted(user_ids, edges_raw[:, 0])
        b = np.searchsorted(user_ids, edges_raw[:, 1])
        keep = a != b
        both = np.concatenate([np.column_stack([a, b]), np.column_stack([b, a])])[np.tile(keep, 2)]
        social = np.unique(both, axis=0)
    else:
        social = np.zeros((0, 2), np.int64)
    return pairs.astype(np.int64), social.astype(np.int64), user_ids, item_ids


def load_lastfm(directory: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Read HetRec-2011 LastFM ``user_artists.dat`` and ``user_friends.dat``.

    Every (user, artist) row is one implicit positive; listen weights are
    ignored. Returns ``(pairs, social, user_ids, item_ids)`` ready for
    :func:`build_dataset`.
    """
    directory = Path(directory)
    artists = _read_int_rows(directory / "user_artists.dat", 2, header=True, sep="\t")
    friends = _read_int_rows(directory / "user_friends.dat", 2, header=True, sep="\t")
    return _assemble(artists[:, :2], friends[:, :2])


def _find(directory: Path, names) -> Path | None:
    for n in names:
        if (directory / n).is_file():
            return directory / n
    return None


def load_ciao(directory: str | Path, positive_threshold: float = 0.0):
    """Read Ciao ratings and trust statements.

    Accepts the original ``rating.mat``/``trustnetwork.mat`` (rating in the
    fourth column) or whitespace/comma separated text files ``rating.txt``
    (user, product, ..., rating) and ``trust.txt``/``trustnetwork.txt``
    (truster, trustee). Ratings ``>= positive_threshold`` become positives;
    trust is symmetrized.
    """
    directory = Path(directory)
    mat = _find(directory, ["rating.mat"])
    if mat is not None:
        from scipy.io import loadmat

        raw = loadmat(mat)
        table = np.asarray(raw[next(k for k in raw if not k.startswith("__"))], dtype=np.float64)
        pairs, ratings = table[:, :2].astype(np.int64), table[:, 3]
    else:
        path = _find(directory, ["rating.txt", "ratings.txt"]) or directory / "rating.txt"
        table = _read_float_rows(path, 3)
        pairs, ratings = table[:, :2].astype(np.int64), table[:, -1]
    tmat = _find(directory, ["trustnetwork.mat"])
    if tmat is not None:
        from scipy.io import loadmat

        raw = loadmat(tmat)
        trust = np.asarray(raw[next(k for k in raw if not k.startswith("__"))], dtype=np.int64)[:, :2]
    else:
        path = _find(directory, ["trust.txt", "trustnetwork.txt"]) or directory / "trust.txt"
        trust = _read_int_rows(path, 2, header=False)[:, :2]
    keep = ratings >= positive_threshold
    return _assemble(pairs[keep], trust)


def _read_float_rows(path: Path, min_cols: int) -> np.ndarray:
    if not path.is_file():
        raise DataError(f"missing input file: {path}")
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.replace(",", " ").split()
            if not fields:
                continue
            if len(fields) < min_cols:
                raise DataError(f"{path}:{lineno}: expected at least {min_cols} fields")
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field in {line.strip()!r}") from None
            if rows[-1][0] != int(rows[-1][0]) or rows[-1][1] != int(rows[-1][1]):
                raise DataError(f"{path}:{lineno}: ids must be integers")
    width = min(len(r) for r in rows) if rows else min_cols
    return np.array([r[:width] for r in rows], dtype=np.float64).reshape(-1, width)


# ---------------------------------------------------------------------------
# splitting and validation
# ---------------------------------------------------------------------------


def split_dataset(pairs: np.ndarray, train_frac: float = 0.8, val_frac: float = 0.1, seed: int = 0):
    """Shuffle, hold out ``1 - train_frac`` as test, then carve ``val_frac`` of the rest as validation.

    With the defaults the final proportions are 72/8/20.
    """
    pairs = np.asarray(pairs, dtype=np.int64)
    if len(pairs) == 0:
        raise DataError("cannot split an empty interaction list")
    rng = np.random.default_rng(seed)
    shuffled = pairs[rng.permutation(len(pairs))]
    n_train = int(round(len(pairs) * train_frac))
    provisional, test = shuffled[:n_train], shuffled[n_train:]
    n_val = int(round(len(provisional) * val_frac))
    val_idx = rng.permutation(len(provisional))
    val = provisional[val_idx[:n_val]]
    train = provisional[np.sort(val_idx[n_val:])]
    return train, val, test


def build_dataset(loaded, seed: int = 0, name: str = "custom") -> Dataset:
    pairs, social, user_ids, item_ids = loaded
    train, val, test = split_dataset(pairs, seed=seed)
    ds = Dataset(len(user_ids), len(item_ids), train, val, test, social, user_ids, item_ids, name)
    validate_dataset(ds)
    return ds


def validate_dataset(ds: Dataset) -> None:
    """Raise :class:`DataError` listing the first offending entries."""
    problems = []
    for which in SPLITS:
        p = ds.split(which)
        bad = p[(p[:, 0] < 0) | (p[:, 0] >= ds.n_users) | (p[:, 1] < 0) | (p[:, 1] >= ds.n_items)]
        if len(bad):
            problems.append(f"{which}: ids out of range, e.g. {bad[:5].tolist()}")
    allp = np.concatenate([ds.train, ds.val, ds.test])
    codes = allp[:, 0] * max(ds.n_items, 1) + allp[:, 1]
    uniq, counts = np.unique(codes, return_counts=True)
    if np.any(counts > 1):
        dup = uniq[counts > 1][:5]
        problems.append(f"duplicate pairs: {np.column_stack([dup // ds.n_items, dup % ds.n_items]).tolist()}")
    s = ds.social
    if len(s):
        if np.any(s[:, 0] == s[:, 1]):
            problems.append(f"self-loops: {s[s[:, 0] == s[:, 1]][:5].tolist()}")
        if np.any((s < 0) | (s >= ds.n_users)):
            problems.append("social ids out of range")
        fwd = {(int(a), int(b)) for a, b in s}
        missing = [(b, a) for a, b in fwd if (b, a) not in fwd]
        if missing:
            problems.append(f"asymmetric social edges: {missing[:5]}")
        if len(fwd) != len(s):
            problems.append("duplicate social edges")
    if problems:
        raise DataError("dataset validation failed: " + "; ".join(problems))


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    """Write ``path`` (npz) and ``path`` with a ``.json`` suffix holding the summary."""
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(
            fh,
            meta=np.array([ds.n_users, ds.n_items], dtype=np.int64),
            train=ds.train,
            val=ds.val,
            test=ds.test,
            social=ds.social,
            user_ids=ds.user_ids,
            item_ids=ds.item_ids,
            name=np.array(ds.name),
        )
    summary = path.with_suffix(".json")
    summary.write_text(json.dumps(ds.summary(), indent=2) + "\n")
    return summary


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing dataset file: {path}")
    try:
        with np.load(path, allow_pickle=False) as z:
            n_users, n_items = (int(x) for x in z["meta"])
            ds = Dataset(
                n_users, n_items, z["train"], z["val"], z["test"], z["social"],
                z["user_ids"], z["item_ids"], str(z["name"]),
            )
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read dataset cache {path}: {exc}") from exc
    validate_dataset(ds)
    return ds
