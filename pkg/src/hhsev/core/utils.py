import hashlib
import re
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

CSV_FLOAT_FORMAT = "%.15g"


def slugify(text: str, max_words: int = 5) -> str:
    """
    Convert a label into a folder-friendly slug.
    Example: "IDS fit to MT data, rho5" -> "ids_fit_to_mt_data"
    """
    clean = re.sub(r'[^a-zA-Z0-9\s_-]', '', text).lower()
    words = re.split(r'[\s_-]+', clean.strip())
    return "_".join(w for w in words[:max_words] if w)


def derive_seed(base_seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed for the job addressed by ``keys``."""
    seq = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a DataFrame with a header row and 15-significant-digit floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found at {path}")
    return pd.read_csv(path)


def file_digest(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
