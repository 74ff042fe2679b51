"""Social-graph-augmented implicit-feedback recommendation (CLSRec, LightGCN, BPR-MF)."""
from ._accel import BACKEND
from .autodiff import Tape, backward, grad_check
from .config import RunConfig
from .data import Dataset, build_dataset, load_ciao, load_dataset, load_lastfm, save_dataset, split_dataset
from .graph import SparseMatrix, normalize_bipartite, normalize_social
from .svd import SvdFactors, truncated_svd
from .training import fit

__all__ = [
    "BACKEND",
    "Dataset",
    "RunConfig",
    "SparseMatrix",
    "SvdFactors",
    "Tape",
    "backward",
    "build_dataset",
    "fit",
    "grad_check",
    "load_ciao",
    "load_dataset",
    "load_lastfm",
    "normalize_bipartite",
    "normalize_social",
    "save_dataset",
    "split_dataset",
    "truncated_svd",
]
__version__ = "0.1.0"
