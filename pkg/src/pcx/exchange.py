"""Size-matched object exchange between scenes.

Clusters within a workable size band are selected per scene (half by
farthest point sampling over centroids, half uniformly), matched across
scenes by the Euclidean distance of their box dimension triples, and
swapped by translating each cluster onto its partner's box center. The
same machinery drives the one-directional corruption used to build
degraded evaluation datasets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientPartners, PlanSceneMismatch
from .geometry import PointCloud, farthest_point_sampling
from .parallel import parallel_map
from .segmentation import SceneSegmentation

DEFAULT_MIN_SIDE = 0.2
DEFAULT_MAX_SIDE = 3.0

# Per-point boolean flag, true iff the point was imported from another
# scene. Aligned with the cloud it accompanies.
RelocationMask = np.ndarray


@dataclass
class ExchangePlan:
    """Everything needed to execute one scene-pair exchange.

    scene_a_ids / scene_b_ids are the selected cluster ids of each scene.
    V holds box-dimension distances, rows = scene_a_ids, columns = ALL
    eligible clusters of B (recorded in eligible_b). pairs lists matched
    (cluster_in_a, cluster_in_b) ids in match order; translations[p] holds
    the two rigid moves for pair p: [0] carries A's cluster onto B's box
    center, [1] the reverse.
    """

    scene_a_ids: np.ndarray
    scene_b_ids: np.ndarray
    eligible_b: np.ndarray
    V: np.ndarray
    pairs: list
    translations: np.ndarray
    beta: Optional[float]
    seed: int

    def __post_init__(self):
        a_side = [a for a, _ in self.pairs]
        b_side = [b for _, b in self.pairs]
        if len(set(a_side)) != len(a_side) or len(set(b_side)) != len(b_side):
            raise ValueError("pairs must not reuse a cluster on either side")


def eligible_clusters(
    seg: SceneSegmentation,
    min_side: float = DEFAULT_MIN_SIDE,
    max_side: float = DEFAULT_MAX_SIDE,
) -> np.ndarray:
    """Ids of clusters whose box has all three dims in [min_side, max_side]."""
    if not min_side < max_side:
        raise ValueError("min_side must be below max_side")
    out = [
        c
        for c, box in enumerate(seg.boxes)
        if all(min_side <= d <= max_side for d in box.dims)
    ]
    return np.asarray(out, dtype=np.int64)


def select_exchange_set(
    seg: SceneSegmentation,
    eligible: np.ndarray,
    beta: Optional[float] = None,
    seed: int = 0,
) -> np.ndarray:
    """Pick floor(beta * |eligible|) clusters for exchange.

    The first floor(n/2) come from farthest point sampling over the
    eligible cluster centroids, started at a seeded-random eligible
    cluster; the rest are drawn uniformly without replacement from the
    remainder. When beta is None the usual rule applies: 0.5 once more
    than 20 clusters are eligible, otherwise 1. Returns ids in selection
    order (FPS picks first).
    """
    eligible = np.asarray(eligible, dtype=np.int64)
    if beta is None:
        beta = 0.5 if len(eligible) > 20 else 1.0
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    n = int(np.floor(beta * len(eligible)))
    if n == 0:
        return np.empty(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    fps_count = n // 2
    chosen: list[int] = []
    if fps_count > 0:
        start = int(rng.integers(len(eligible)))
        centroids = seg.centroids[eligible]
        picked = farthest_point_sampling(centroids, fps_count, start=start)
        chosen.extend(eligible[picked].tolist())
    rest = np.setdiff1d(eligible, np.asarray(chosen, dtype=np.int64))
    rand_count = n - fps_count
    if rand_count > 0:
        extra = rng.choice(len(rest), size=rand_count, replace=False)
        chosen.extend(rest[extra].tolist())
    return np.asarray(chosen, dtype=np.int64)


def box_similarity_matrix(boxes_a: Sequence, boxes_b: Sequence) -> np.ndarray:
    """V[i][j] = Euclidean distance of the boxes' (l, w, h) triples."""
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        raise ValueError("both box lists must be non-empty")
    da = np.array([b.dims for b in boxes_a], dtype=np.float64)
    db = np.array([b.dims for b in boxes_b], dtype=np.float64)
    diff = da[:, None, :] - db[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def greedy_match(V: np.ndarray) -> list[tuple[int, int]]:
    """Repeated global-minimum assignment.

    Selects the smallest surviving entry (ties broken by lowest row, then
    lowest column), records the pair, and removes its row and column,
    until either axis is exhausted. Pairs come back in selection order.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2:
        raise ValueError("V must be a matrix")
    if V.size and (not np.all(np.isfinite(V)) or V.min() < 0):
        raise ValueError("V must be finite and non-negative")
    work = V.copy()
    pairs: list[tuple[int, int]] = []
    for _ in range(min(work.shape)):
        flat = int(np.argmin(work))  # first minimum in row-major order
        r, c = divmod(flat, work.shape[1])
        pairs.append((r, c))
        work[r, :] = np.inf
        work[:, c] = np.inf
    return pairs


def plan_exchange(
    seg_a: SceneSegmentation,
    seg_b: SceneSegmentation,
    beta: Optional[float] = None,
    seed: int = 0,
    min_side: float = DEFAULT_MIN_SIDE,
    max_side: float = DEFAULT_MAX_SIDE,
) -> ExchangePlan:
    """Select, size-match, and pair clusters for one scene pair.

    A's selected clusters are matched against every eligible cluster of
    B, so a small B still offers its best size matches; B's own selected
    set is recorded for inspection but does not constrain the matching.
    """
    rng = np.random.default_rng(seed)
    seed_a = int(rng.integers(2**63))
    seed_b = int(rng.integers(2**63))
    elig_a = eligible_clusters(seg_a, min_side, max_side)
    elig_b = eligible_clusters(seg_b, min_side, max_side)
    sel_a = select_exchange_set(seg_a, elig_a, beta=beta, seed=seed_a)
    sel_b = select_exchange_set(seg_b, elig_b, beta=beta, seed=seed_b)

    if len(sel_a) and len(elig_b):
        V = box_similarity_matrix([seg_a.boxes[c] for c in sel_a],
                                  [seg_b.boxes[c] for c in elig_b])
        raw_pairs = greedy_match(V)
    else:
        V = np.empty((len(sel_a), len(elig_b)), dtype=np.float64)
        raw_pairs = []
    pairs = [(int(sel_a[r]), int(elig_b[c])) for r, c in raw_pairs]

    translations = np.empty((len(pairs), 2, 3), dtype=np.float64)
    for p, (ca, cb) in enumerate(pairs):
        delta = seg_b.boxes[cb].center - seg_a.boxes[ca].center
        translations[p, 0] = delta
        translations[p, 1] = -delta
    return ExchangePlan(
        scene_a_ids=sel_a,
        scene_b_ids=sel_b,
        eligible_b=elig_b,
        V=V,
        pairs=pairs,
        translations=translations,
        beta=beta,
        seed=seed,
    )


def _validate_pairs(plan: ExchangePlan, seg_a: SceneSegmentation,
                    seg_b: SceneSegmentation) -> None:
    for ca, cb in plan.pairs:
        if not 0 <= ca < seg_a.num_clusters:
            raise PlanSceneMismatch(f"cluster {ca} not in scene A's segmentation")
        if not 0 <= cb < seg_b.num_clusters:
            raise PlanSceneMismatch(f"cluster {cb} not in scene B's segmentation")


def _transplant(
    cloud: PointCloud,
    seg: SceneSegmentation,
    outgoing: list[int],
    incoming: list[tuple[PointCloud, SceneSegmentation, int, np.ndarray]],
) -> tuple[PointCloud, np.ndarray]:
    """Remove ``outgoing`` clusters, append translated foreign clusters.

    incoming entries are (donor cloud, donor segmentation, donor cluster
    id, translation). Retained native points keep their order and their
    cluster ids; each imported cluster gets a fresh id after the native
    ones. Returns the new cloud (cluster ids attached) and its mask.
    """
    native = ~np.isin(seg.cluster_of, outgoing)
    parts_pos = [cloud.positions[native]]
    parts_col = [cloud.colors[native]]
    has_normals = cloud.normals is not None
    has_labels = cloud.labels is not None
    parts_nrm = [cloud.normals[native]] if has_normals else None
    parts_lbl = [cloud.labels[native]] if has_labels else None
    parts_cid = [seg.cluster_of[native].astype(np.int64)]

    next_id = seg.num_clusters
    for donor, donor_seg, donor_cluster, shift in incoming:
        rows = donor_seg.points_in(donor_cluster)
        parts_pos.append(donor.positions[rows] + shift)
        parts_col.append(donor.colors[rows])
        if has_normals:
            if donor.normals is None:
                raise PlanSceneMismatch("donor scene lacks normals carried by host")
            parts_nrm.append(donor.normals[rows])
        if has_labels:
            if donor.labels is None:
                raise PlanSceneMismatch("donor scene lacks labels carried by host")
            parts_lbl.append(donor.labels[rows])
        parts_cid.append(np.full(len(rows), next_id, dtype=np.int64))
        next_id += 1

    cluster_raw = np.concatenate(parts_cid)
    # Compact ids in order of first appearance.
    _, first, inverse = np.unique(cluster_raw, return_index=True, return_inverse=True)
    remap = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    new_cloud = PointCloud(
        positions=np.concatenate(parts_pos),
        colors=np.concatenate(parts_col),
        normals=np.concatenate(parts_nrm) if has_normals else None,
        labels=np.concatenate(parts_lbl) if has_labels else None,
        clusters=remap[inverse].astype(np.int32),
        scene_id=cloud.scene_id,
    )
    native_count = int(native.sum())
    mask = np.zeros(len(new_cloud), dtype=bool)
    mask[native_count:] = True
    return new_cloud, mask


def exchange_objects(
    cloud_a: PointCloud,
    seg_a: SceneSegmentation,
    cloud_b: PointCloud,
    seg_b: SceneSegmentation,
    plan: ExchangePlan,
) -> tuple[PointCloud, PointCloud, RelocationMask, RelocationMask]:
    """Carry out the planned swap.

    For each pair (i, j), cluster i leaves A and lands in B translated
    onto B_j's box center while cluster j makes the reverse trip. Colors,
    normals, and labels travel with their points; untouched points keep
    their coordinates and order. Returns the two new scenes and their
    imported-point masks.
    """
    _validate_pairs(plan, seg_a, seg_b)
    out_a = [ca for ca, _ in plan.pairs]
    out_b = [cb for _, cb in plan.pairs]
    into_b = [
        (cloud_a, seg_a, ca, plan.translations[p, 0])
        for p, (ca, _) in enumerate(plan.pairs)
    ]
    into_a = [
        (cloud_b, seg_b, cb, plan.translations[p, 1])
        for p, (_, cb) in enumerate(plan.pairs)
    ]
    new_a, mask_a = _transplant(cloud_a, seg_a, out_a, into_a)
    new_b, mask_b = _transplant(cloud_b, seg_b, out_b, into_b)
    return new_a, new_b, mask_a, mask_b


def _corrupt_one(
    scenes: Sequence[tuple[PointCloud, SceneSegmentation]],
    index: int,
    delta: float,
    seed: int,
    min_side: float,
    max_side: float,
) -> tuple[PointCloud, np.ndarray]:
    cloud, seg = scenes[index]
    rng = np.random.default_rng(seed ^ index)
    others = [i for i in range(len(scenes)) if i != index]
    partner_idx = others[int(rng.integers(len(others)))]
    partner_cloud, partner_seg = scenes[partner_idx]

    elig = eligible_clusters(seg, min_side, max_side)
    sel_seed = int(rng.integers(2**63))
    selected = select_exchange_set(seg, elig, beta=delta, seed=sel_seed)
    elig_p = eligible_clusters(partner_seg, min_side, max_side)
    if len(selected) == 0 or len(elig_p) == 0:
        untouched, mask = _transplant(cloud, seg, [], [])
        return untouched, mask

    V = box_similarity_matrix([seg.boxes[c] for c in selected],
                              [partner_seg.boxes[c] for c in elig_p])
    raw_pairs = greedy_match(V)
    outgoing = [int(selected[r]) for r, _ in raw_pairs]
    incoming = []
    for r, c in raw_pairs:
        own = int(selected[r])
        donor_cluster = int(elig_p[c])
        shift = seg.boxes[own].center - partner_seg.boxes[donor_cluster].center
        incoming.append((partner_cloud, partner_seg, donor_cluster, shift))
    return _transplant(cloud, seg, outgoing, incoming)


def make_corrupted_dataset(
    scenes: Sequence[tuple[PointCloud, SceneSegmentation]],
    delta: float,
    seed: int = 0,
    min_side: float = DEFAULT_MIN_SIDE,
    max_side: float = DEFAULT_MAX_SIDE,
) -> tuple[list[PointCloud], list[RelocationMask]]:
    """Replace a proportion of every scene's objects with foreign ones.

    Each scene independently draws a partner, selects floor(delta * M)
    of its M eligible clusters, and swaps them for the partner's best
    size matches. Partners are read only, so every scene's corruption
    depends only on the seed and its own index, never on processing
    order. Scenes are processed in parallel when the thread cap allows.
    """
    if len(scenes) < 2:
        raise InsufficientPartners("corruption needs at least 2 scenes")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    results = parallel_map(
        lambda m: _corrupt_one(scenes, m, delta, seed, min_side, max_side),
        range(len(scenes)),
    )
    clouds = [cloud for cloud, _ in results]
    masks = [mask for _, mask in results]
    return clouds, masks
