"""Perplexity and retrieval metrics."""
from __future__ import annotations

import math

import numpy as np

RIDGE = 1e-8


def log_perplexity_per_doc(log_p: float, n_docs: int) -> float:
    if n_docs < 1:
        raise ValueError("need at least one test document")
    return -float(log_p) / n_docs


def perplexity_per_doc(log_p: float, n_docs: int) -> float:
    """``exp(-log_p / n_docs)``; may overflow to ``inf`` for long documents, see
    :func:`log_perplexity_per_doc`."""
    lp = log_perplexity_per_doc(log_p, n_docs)
    return math.exp(lp) if lp < 709.0 else math.inf


def infer_test_coefficients(X_test, Phi, ridge: float = RIDGE) -> np.ndarray:
    """Ridge least squares ``H = argmin ||X - Phi H||^2 + ridge ||H||^2``; returns ``K x N``."""
    Phi = np.asarray(Phi, float)
    G = Phi.T @ Phi + ridge * np.eye(Phi.shape[1])
    return np.linalg.solve(G, Phi.T @ np.asarray(X_test, float))


def cosine_matrix(Q, T) -> np.ndarray:
    """Rows of ``Q`` against rows of ``T``; zero vectors score 0."""
    Q = np.asarray(Q, float)
    T = np.asarray(T, float)
    qn = np.linalg.norm(Q, axis=1)
    tn = np.linalg.norm(T, axis=1)
    S = Q @ T.T
    den = np.outer(qn, tn)
    with np.errstate(invalid="ignore", divide="ignore"):
        S = np.where(den > 0, S / np.where(den > 0, den, 1.0), 0.0)
    return S


def rank_items(scores) -> np.ndarray:
    """Indices by decreasing score; ties keep training order."""
    return np.argsort(-np.asarray(scores), kind="stable")


def average_precision(relevant_sorted) -> float:
    rel = np.asarray(relevant_sorted, dtype=bool)
    if not rel.any():
        return 0.0
    hits = np.cumsum(rel)
    ranks = np.flatnonzero(rel) + 1
    return float(np.mean(hits[rel] / ranks))


def retrieval_eval(H_query, H_train, query_labels, train_labels, n_list=(10, 20, 50)) -> dict:
    """Precision at each N and mean average precision.

    ``H_query`` and ``H_train`` hold one coefficient vector per row.
    """
    S = cosine_matrix(H_query, H_train)
    train_labels = np.asarray(train_labels)
    prec = {int(n): [] for n in n_list}
    aps = []
    for q, lab in enumerate(np.asarray(query_labels)):
        rel = train_labels[rank_items(S[q])] == lab
        for n in prec:
            prec[n].append(float(rel[:n].sum()) / n)
        aps.append(average_precision(rel))
    return {"precision_at": {n: float(np.mean(v)) for n, v in prec.items()},
            "map": float(np.mean(aps)) if aps else 0.0}
