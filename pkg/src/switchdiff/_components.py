import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


def components(n, pairs):
    """Classes of ``0..n-1`` under the links in ``pairs``: sorted lists ordered by least member."""
    pairs = np.asarray(list(pairs), dtype=int).reshape(-1, 2)
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    groups = {}
    for k, lab in enumerate(labels):
        groups.setdefault(lab, []).append(k)
    return sorted(groups.values(), key=lambda g: g[0])
