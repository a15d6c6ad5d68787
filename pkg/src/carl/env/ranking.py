"""Score fusion and the top-L ranking step."""
from __future__ import annotations

import numpy as np


class CandidateShortage(ValueError):
    pass


def fusion_score(x, a, form: str = "linear", eps: float = 1e-6) -> np.ndarray | float:
    """Final ranking score of item scores ``x`` (shape ``(..., n)``) under
    fusion weights ``a`` (shape ``(n,)``).

    ``linear``: ``sum_i a_i x_i``.  ``multiplicative``: ``prod_i (x_i + eps)^a_i``.
    Both are nondecreasing in every ``x_i`` when ``a >= 0``.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if x.shape[-1] != a.shape[-1]:
        raise ValueError(f"score dimension {x.shape[-1]} != action dimension {a.shape[-1]}")
    if form == "linear":
        z = x @ a
    elif form == "multiplicative":
        z = np.exp(np.log(x + eps) @ a)
    else:
        raise ValueError(f"unknown fusion form {form!r}")
    return float(z) if np.ndim(z) == 0 else z


def rank_and_split(item_ids, scores, action, L: int, K: int, form: str = "linear",
                   eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Rank candidates by fused score and split the top ``L``.

    Returns positions (into ``item_ids``) of the ``K`` shown items and of the
    ``L - K`` items destined for the cache, best first.  Ties go to the
    smaller item id.
    """
    item_ids = np.asarray(item_ids)
    if len(item_ids) < L:
        raise CandidateShortage(f"need at least {L} candidates, got {len(item_ids)}")
    z = fusion_score(scores, action, form, eps)
    order = np.lexsort((item_ids, -z))[:L]
    return order[:K], order[K:L]
