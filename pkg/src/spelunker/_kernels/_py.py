"""Pure-Python (numpy) distance kernels, the fallback backend.

Both kernels fill ``out`` with *squared* combined distances. The arithmetic
mirrors the native kernels field-for-field so results agree to float
rounding; within one backend, brute-force and tree search share these exact
routines, so their outputs are bitwise comparable.
"""

from __future__ import annotations

import numpy as np

NUMERIC_CAP = 6.0
NUMERIC_PENALTY_SQ = 9.0    # (cap/2)^2
BOOLEAN_PENALTY_SQ = 0.25
CATEGORICAL_CAP_SQ = 4.0
CATEGORICAL_PENALTY_SQ = 1.0


def ref_sq_distances(num, num_miss, boo, boo_miss, cat, emb, row, rows, out):
    """Squared all-field unit-weight distance from record ``row`` to ``rows``."""
    out[:] = 0.0
    if num.shape[1]:
        a = num[row]
        am = num_miss[row].astype(bool)
        vals = num[rows]
        miss = num_miss[rows].astype(bool)
        d = np.minimum(np.abs(vals - a), NUMERIC_CAP)
        sq = d * d
        one = miss ^ am
        both = miss & am
        contrib = np.where(one, NUMERIC_PENALTY_SQ, sq)
        contrib[both] = 0.0
        out += contrib.sum(axis=1)
    if boo.shape[1]:
        a = boo[row]
        am = boo_miss[row].astype(bool)
        vals = boo[rows]
        miss = boo_miss[rows].astype(bool)
        neq = (vals != a).astype(np.float64)
        one = miss ^ am
        both = miss & am
        contrib = np.where(one, BOOLEAN_PENALTY_SQ, neq)
        contrib[both] = 0.0
        out += contrib.sum(axis=1)
    for col in range(cat.shape[1]):
        ia = int(cat[row, col])
        idx = cat[rows, col]
        rec_miss = idx < 0
        if ia < 0:
            out += np.where(rec_miss, 0.0, CATEGORICAL_PENALTY_SQ)
            continue
        diff = emb[np.maximum(idx, 0)] - emb[ia]
        s = np.minimum(np.einsum("ij,ij->i", diff, diff), CATEGORICAL_CAP_SQ)
        out += np.where(rec_miss, CATEGORICAL_PENALTY_SQ, s)


def query_sq_distances(num, num_miss, boo, boo_miss, cat, emb,
                       qn_cols, qn_vals, qn_miss, qn_w,
                       qb_cols, qb_vals, qb_miss, qb_w,
                       qc_cols, qc_vecs, qc_miss, qc_w,
                       rows, out):
    """Squared weighted distance from a packed query to each of ``rows``."""
    out[:] = 0.0
    if qn_cols.size:
        vals = num[rows][:, qn_cols]
        miss = num_miss[rows][:, qn_cols].astype(bool)
        qmiss = qn_miss.astype(bool)
        d = np.minimum(np.abs(vals - qn_vals), NUMERIC_CAP)
        sq = d * d
        one = miss ^ qmiss
        both = miss & qmiss
        contrib = np.where(one, NUMERIC_PENALTY_SQ, sq)
        contrib[both] = 0.0
        out += contrib @ qn_w
    if qb_cols.size:
        vals = boo[rows][:, qb_cols]
        miss = boo_miss[rows][:, qb_cols].astype(bool)
        qmiss = qb_miss.astype(bool)
        neq = (vals != qb_vals).astype(np.float64)
        one = miss ^ qmiss
        both = miss & qmiss
        contrib = np.where(one, BOOLEAN_PENALTY_SQ, neq)
        contrib[both] = 0.0
        out += contrib @ qb_w
    for j in range(qc_cols.size):
        idx = cat[rows, qc_cols[j]]
        rec_miss = idx < 0
        if qc_miss[j]:
            out += qc_w[j] * np.where(rec_miss, 0.0, CATEGORICAL_PENALTY_SQ)
            continue
        diff = emb[np.maximum(idx, 0)] - qc_vecs[j]
        s = np.minimum(np.einsum("ij,ij->i", diff, diff), CATEGORICAL_CAP_SQ)
        out += qc_w[j] * np.where(rec_miss, CATEGORICAL_PENALTY_SQ, s)
