import logging
from dataclasses import replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra, minimum_spanning_tree

from src.search.spatial_index import SpatialIndex

logger = logging.getLogger(__name__)

# Keeps parallel-normal edges present in the sparse graph
EDGE_OFFSET = 1e-12


def orient_normals(cloud, normal_field, k=8):
    """
    Consistently orient valid normals along a minimum spanning tree

    The graph joins each valid point to its k nearest valid neighbours, with
    weight 1 - |n_i . n_j|. Each connected component is seeded at its highest
    point (lowest index on ties), whose normal is turned toward +z; walking the
    tree away from the seed, a child is flipped when it disagrees with its
    already-oriented parent.

    Returns:
        NormalField copy with oriented=True and one seed per component
    """
    valid_idx = np.flatnonzero(normal_field.valid_mask)
    normals = normal_field.normals.copy()
    if len(valid_idx) == 0:
        logger.warning("No valid normals to orient")
        return replace(normal_field, normals=normals, oriented=True,
                       seed_indices=np.empty(0, dtype=np.int64))

    points = cloud.points[valid_idx]
    local = normals[valid_idx]
    m = len(valid_idx)

    graph = _knn_graph(points, local, k)
    tree = minimum_spanning_tree(graph)
    n_components, labels = connected_components(tree, directed=False)

    # highest z first, then lowest index, within each component
    order = np.lexsort((np.arange(m), -points[:, 2], labels))
    first = np.ones(m, dtype=bool)
    first[1:] = labels[order][1:] != labels[order][:-1]
    seeds = order[first]

    # parity of disagreeing edges on the tree path from each component's seed
    rows, cols = tree.nonzero()
    disagree = np.einsum('ij,ij->i', local[rows], local[cols]) < 0
    parity_graph = csr_matrix((np.where(disagree, 1.0, 2.0), (rows, cols)), shape=(m, m))
    path_weight = dijkstra(parity_graph, directed=False, indices=seeds, min_only=True)
    flip = (path_weight.astype(np.int64) % 2) == 1

    # seeds are listed in label order
    seed_down = local[seeds, 2] < 0
    flip ^= seed_down[labels]

    local[flip] *= -1.0
    normals[valid_idx] = local

    logger.info(f"Oriented {m} normals over {n_components} component(s); {int(flip.sum())} flipped")
    return replace(normal_field, normals=normals, oriented=True,
                   seed_indices=valid_idx[np.sort(seeds)])


def _knn_graph(points, normals, k):
    """Upper-triangular CSR over deduplicated k-NN edges, weight 1 - |dot| + offset"""
    m = len(points)
    if m == 1:
        return csr_matrix((1, 1))

    index = SpatialIndex(points)
    neighbours, _ = index.k_nearest_many(points, min(k + 1, m))
    rows = np.repeat(np.arange(m, dtype=np.int64), neighbours.shape[1])
    cols = neighbours.ravel()
    distinct = rows != cols
    a = np.minimum(rows[distinct], cols[distinct])
    b = np.maximum(rows[distinct], cols[distinct])

    keys = np.unique(a * m + b)
    a, b = keys // m, keys % m
    weight = 1.0 - np.abs(np.einsum('ij,ij->i', normals[a], normals[b]))
    weight = np.clip(weight, 0.0, None) + EDGE_OFFSET
    return csr_matrix((weight, (a, b)), shape=(m, m))
