from typing import Dict, List, Any

import numpy as np
import pandas as pd

from hhsev.core.params import ModelKind


def log_scale_histogram(values: List[float], bins_per_decade: int = 2, floor: float = 1e-16) -> pd.DataFrame:
    """Counts of best-fit distances in log10 bins."""
    v = np.maximum(np.asarray(values, dtype=float), floor)
    if v.size == 0:
        return pd.DataFrame(columns=["log10_left", "log10_right", "count"])
    logs = np.log10(v)
    lo = np.floor(logs.min() * bins_per_decade) / bins_per_decade
    hi = np.ceil(logs.max() * bins_per_decade) / bins_per_decade
    if hi <= lo:
        hi = lo + 1.0 / bins_per_decade
    edges = np.arange(lo, hi + 0.5 / bins_per_decade, 1.0 / bins_per_decade)
    counts, edges = np.histogram(logs, bins=edges)
    return pd.DataFrame({"log10_left": edges[:-1], "log10_right": edges[1:], "count": counts})


def separation_ratio(wrong_f: float, correct_f: float) -> float:
    """How many times worse the wrong model fits; inf when the correct fit is exact."""
    if correct_f <= 0:
        return float("inf")
    return wrong_f / correct_f


def calculate_cross_fit_metrics(frame: pd.DataFrame) -> Dict[str, Any]:
    """Per distribution: best correct-model and wrong-model f and their separation."""
    out: Dict[str, Any] = {}
    for dist, group in frame.groupby("dist"):
        correct = group[group["fitted_model"] == group["data_model"]]["best_f"]
        wrong = group[group["fitted_model"] != group["data_model"]]["best_f"]
        out[str(dist)] = {
            "max_correct_f": float(correct.max()),
            "min_wrong_f": float(wrong.min()),
            "separation": separation_ratio(float(wrong.min()), float(correct.max())),
        }
    return out


def calculate_sweep_metrics(frame: pd.DataFrame, good_fit: float = 1e-6) -> Dict[str, Any]:
    """Share of datasets the wrong model reproduces, and how many of those are flagged degenerate."""
    if frame.empty:
        return {"datasets": 0}
    flag_cols = [c for c in frame.columns if c.startswith("flag_")]
    flagged = frame[flag_cols].fillna(False).astype(bool).any(axis=1) if flag_cols else pd.Series(False, index=frame.index)
    good = frame["best_f"] < good_fit
    return {
        "datasets": int(len(frame)),
        "good_wrong_model_fits": int(good.sum()),
        "good_fits_flagged": int((good & flagged).sum()),
        "median_best_f": float(frame["best_f"].median()),
    }


def calculate_finite_metrics(frame: pd.DataFrame, generating_model: ModelKind) -> Dict[str, Any]:
    wins = int(frame["correct_model_wins"].sum()) if not frame.empty else 0
    return {
        "generating_model": generating_model.value,
        "datasets": int(len(frame)),
        "correct_model_wins": wins,
    }
