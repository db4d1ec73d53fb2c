"""Binary regression trees, their prior, and the structural MH proposal kernel.

Trees partition the covariate space by axis-aligned splits ``z[var] <= thr``
(left child takes the boundary). Split thresholds are drawn from the observed
values of each covariate among in-window units, restricted per node to those
that leave both children nonempty, so grow proposals never create an
empty-data child. Change and swap proposals can starve a descendant, in which
case the proposal is flagged invalid and treated as an MH rejection.

The node-splitting prior is ``alpha * (1 + depth)^(-beta)``. For ratio
computations the prior is availability-aware: a leaf whose region admits no
valid split (or that sits at the depth cap) is terminal with probability one,
which makes the prior a proper distribution on the tree space reachable from
the data.

Candidate thresholds are represented by their rank within each column's
sorted candidate array; a node then caches the per-column (min, max) ranks of
its in-window units, and the number of valid thresholds on a column is simply
max_rank - min_rank. The caches are shared between a tree and its clones and
invalidated only where a structural move touches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GROW = "grow"
PRUNE = "prune"
CHANGE = "change"
SWAP = "swap"

# Chipman-style proposal mixture; mass of unavailable kinds is reassigned
# proportionally among the available ones.
MOVE_PROBS = {GROW: 0.25, PRUNE: 0.25, CHANGE: 0.40, SWAP: 0.10}

MAX_DEPTH = 10


@dataclass(frozen=True)
class SplitRule:
    """An axis-aligned split: left child receives z[var_index] <= threshold."""

    var_index: int
    threshold: float


class SplitData:
    """Covariates and candidate split sets shared by all trees of one chain.

    Candidate thresholds per variable are the unique observed values among
    in-window units. ``rank[i, j]`` is the index of z[i, j] within column j's
    candidate array (exact for in-window rows, which is where it is used).
    """

    def __init__(self, z: np.ndarray, in_window: np.ndarray, max_depth: int = MAX_DEPTH):
        z = np.asarray(z, dtype=float)
        if z.ndim != 2:
            raise ValueError("z must be a 2-d matrix")
        in_window = np.asarray(in_window, dtype=bool)
        if in_window.shape[0] != z.shape[0]:
            raise ValueError("in_window mask must match z rows")
        if not in_window.any():
            raise ValueError("no in-window units")
        self.z = z
        self.in_window = in_window
        self.n, self.d = z.shape
        self.max_depth = int(max_depth)
        ziw = z[in_window]
        self.candidates = [np.unique(ziw[:, j]) for j in range(self.d)]
        self.iw_rows = np.flatnonzero(in_window)
        rank = np.empty((self.n, self.d), dtype=np.int32)
        for j in range(self.d):
            rank[:, j] = np.searchsorted(self.candidates[j], z[:, j], side="left")
        self.rank = rank


class Tree:
    """A full binary tree over a fixed :class:`SplitData`, with leaf means.

    Nodes live in a growable arena of parallel lists; ``var[i] == -1`` marks a
    leaf. ``assign`` maps every data row (in-window or not) to its leaf node
    id. ``rows_iw`` caches each node's in-window row indices and
    ``rank_bounds`` its per-column (min, max) candidate ranks; clones share
    these caches and only touched nodes are recomputed.
    """

    __slots__ = ("data", "var", "thr", "left", "right", "parent", "depth", "mu",
                 "assign", "rows_iw", "rank_bounds", "_free")

    def __init__(self, data: SplitData):
        self.data = data
        self.var = [-1]
        self.thr = [0.0]
        self.left = [-1]
        self.right = [-1]
        self.parent = [-1]
        self.depth = [0]
        self.mu = [0.0]
        self.assign = np.zeros(data.n, dtype=np.int64)
        self.rows_iw: dict[int, np.ndarray] = {0: data.iw_rows}
        self.rank_bounds: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._free: list[int] = []

    # ------------------------------------------------------------------ basic

    def clone(self) -> "Tree":
        t = Tree.__new__(Tree)
        t.data = self.data
        t.var = list(self.var)
        t.thr = list(self.thr)
        t.left = list(self.left)
        t.right = list(self.right)
        t.parent = list(self.parent)
        t.depth = list(self.depth)
        t.mu = list(self.mu)
        t.assign = self.assign.copy()
        t.rows_iw = dict(self.rows_iw)
        t.rank_bounds = dict(self.rank_bounds)
        t._free = list(self._free)
        return t

    def is_leaf(self, node: int) -> bool:
        return self.var[node] == -1

    def nodes(self) -> list[int]:
        """All live node ids, preorder from the root."""
        out, stack = [], [0]
        while stack:
            nd = stack.pop()
            out.append(nd)
            if self.var[nd] != -1:
                stack.append(self.right[nd])
                stack.append(self.left[nd])
        return out

    def leaves(self) -> list[int]:
        return [nd for nd in self.nodes() if self.var[nd] == -1]

    def internal_nodes(self) -> list[int]:
        return [nd for nd in self.nodes() if self.var[nd] != -1]

    def nog_nodes(self) -> list[int]:
        """Internal nodes with two leaf children (prunable)."""
        return [
            nd for nd in self.internal_nodes()
            if self.var[self.left[nd]] == -1 and self.var[self.right[nd]] == -1
        ]

    def swap_pairs(self) -> list[tuple[int, int]]:
        """(parent, child) pairs where both are internal."""
        return [
            (self.parent[nd], nd)
            for nd in self.internal_nodes()
            if self.parent[nd] != -1 and self.var[self.parent[nd]] != -1
        ]

    def n_leaves(self) -> int:
        return len(self.leaves())

    def leaves_under(self, node: int) -> list[int]:
        out, stack = [], [node]
        while stack:
            nd = stack.pop()
            if self.var[nd] == -1:
                out.append(nd)
            else:
                stack.append(self.right[nd])
                stack.append(self.left[nd])
        return out

    def subtree_mask(self, node: int) -> np.ndarray:
        """Boolean row mask of units routed into the subtree at ``node``."""
        if node == 0:
            return np.ones(self.data.n, dtype=bool)
        return np.isin(self.assign, self.leaves_under(node))

    # ------------------------------------------------------------- structure

    def _new_node(self, parent: int, depth: int) -> int:
        if self._free:
            nd = self._free.pop()
            self.var[nd] = -1
            self.thr[nd] = 0.0
            self.left[nd] = -1
            self.right[nd] = -1
            self.parent[nd] = parent
            self.depth[nd] = depth
            self.mu[nd] = 0.0
            return nd
        self.var.append(-1)
        self.thr.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.parent.append(parent)
        self.depth.append(depth)
        self.mu.append(0.0)
        return len(self.var) - 1

    def _drop_cache(self, node: int) -> None:
        self.rows_iw.pop(node, None)
        self.rank_bounds.pop(node, None)

    def _split_rows(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        rows = self.node_rows_iw(node)
        goes_left = self.data.z[rows, self.var[node]] <= self.thr[node]
        return rows[goes_left], rows[~goes_left]

    def grow(self, leaf: int, var: int, thr: float) -> None:
        if self.var[leaf] != -1:
            raise ValueError("grow target must be a leaf")
        lo = self._new_node(leaf, self.depth[leaf] + 1)
        hi = self._new_node(leaf, self.depth[leaf] + 1)
        self.var[leaf] = var
        self.thr[leaf] = thr
        self.left[leaf] = lo
        self.right[leaf] = hi
        self.rows_iw[lo], self.rows_iw[hi] = self._split_rows(leaf)
        rows = np.flatnonzero(self.assign == leaf)
        goes_left = self.data.z[rows, var] <= thr
        self.assign[rows[goes_left]] = lo
        self.assign[rows[~goes_left]] = hi

    def prune(self, node: int) -> None:
        lo, hi = self.left[node], self.right[node]
        if lo == -1 or self.var[lo] != -1 or self.var[hi] != -1:
            raise ValueError("prune target must have two leaf children")
        self.assign[(self.assign == lo) | (self.assign == hi)] = node
        self._drop_cache(lo)
        self._drop_cache(hi)
        self._free.extend((lo, hi))
        self.var[node] = -1
        self.left[node] = -1
        self.right[node] = -1

    def _rebuild_subtree(self, node: int) -> None:
        """Refresh cached in-window rows below ``node`` after a rule change."""
        if self.var[node] == -1:
            return
        lo, hi = self.left[node], self.right[node]
        rows_lo, rows_hi = self._split_rows(node)
        self.rows_iw[lo] = rows_lo
        self.rows_iw[hi] = rows_hi
        self.rank_bounds.pop(lo, None)
        self.rank_bounds.pop(hi, None)
        self._rebuild_subtree(lo)
        self._rebuild_subtree(hi)

    def _route_rows(self, node: int, rows: np.ndarray) -> None:
        if self.var[node] == -1:
            self.assign[rows] = node
            return
        goes_left = self.data.z[rows, self.var[node]] <= self.thr[node]
        self._route_rows(self.left[node], rows[goes_left])
        self._route_rows(self.right[node], rows[~goes_left])

    def change(self, node: int, var: int, thr: float) -> None:
        if self.var[node] == -1:
            raise ValueError("change target must be internal")
        mask = self.subtree_mask(node)
        self.var[node] = var
        self.thr[node] = thr
        self._route_rows(node, np.flatnonzero(mask))
        self._rebuild_subtree(node)

    def swap(self, parent: int, child: int) -> None:
        if self.var[parent] == -1 or self.var[child] == -1:
            raise ValueError("swap targets must both be internal")
        mask = self.subtree_mask(parent)
        self.var[parent], self.var[child] = self.var[child], self.var[parent]
        self.thr[parent], self.thr[child] = self.thr[child], self.thr[parent]
        self._route_rows(parent, np.flatnonzero(mask))
        self._rebuild_subtree(parent)

    # ------------------------------------------------------------ prediction

    def leaf_of(self, z: np.ndarray) -> int:
        """Route a single covariate vector to its leaf id."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.data.d,):
            raise ValueError(f"expected covariate vector of length {self.data.d}")
        nd = 0
        while self.var[nd] != -1:
            nd = self.left[nd] if z[self.var[nd]] <= self.thr[nd] else self.right[nd]
        return nd

    def assign_matrix(self, Z: np.ndarray) -> np.ndarray:
        """Leaf ids for each row of a covariate matrix."""
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] != self.data.d:
            raise ValueError(f"expected matrix with {self.data.d} columns")
        out = np.zeros(Z.shape[0], dtype=np.int64)
        stack = [(0, np.arange(Z.shape[0]))]
        while stack:
            nd, rows = stack.pop()
            if self.var[nd] == -1:
                out[rows] = nd
                continue
            goes_left = Z[rows, self.var[nd]] <= self.thr[nd]
            stack.append((self.left[nd], rows[goes_left]))
            stack.append((self.right[nd], rows[~goes_left]))
        return out

    def predict(self, Z: np.ndarray) -> np.ndarray:
        """Leaf means for each row of a covariate matrix."""
        return np.asarray(self.mu)[self.assign_matrix(Z)]

    def fit_values(self) -> np.ndarray:
        """Leaf means at the training rows (uses the maintained assignment)."""
        return np.asarray(self.mu)[self.assign]

    # --------------------------------------------------- candidate availability

    def node_rows_iw(self, node: int) -> np.ndarray:
        """In-window row indices routed through ``node`` (cached)."""
        rows = self.rows_iw.get(node)
        if rows is None:
            if self.var[node] == -1:
                rows = np.flatnonzero((self.assign == node) & self.data.in_window)
            else:
                rows = np.flatnonzero(self.subtree_mask(node) & self.data.in_window)
            self.rows_iw[node] = rows
        return rows

    def _bounds(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        bounds = self.rank_bounds.get(node)
        if bounds is None:
            rows = self.node_rows_iw(node)
            if rows.size == 0:
                zero = np.zeros(self.data.d, dtype=np.int64)
                bounds = (zero, zero)
            else:
                sub = self.data.rank[rows]
                bounds = (sub.min(axis=0), sub.max(axis=0))
            self.rank_bounds[node] = bounds
        return bounds

    def valid_threshold_counts(self, node: int) -> np.ndarray:
        """Per-variable counts of thresholds splitting the node's in-window data.

        A threshold t is valid iff min <= t < max of the node's in-window
        values for that variable, which guarantees both children nonempty.
        """
        lo, hi = self._bounds(node)
        return hi - lo

    def growable(self, leaf: int) -> bool:
        """Whether the leaf admits any valid split below the depth cap."""
        if self.depth[leaf] >= self.data.max_depth:
            return False
        lo, hi = self._bounds(leaf)
        return bool((hi > lo).any())

    def growable_leaves(self) -> list[int]:
        return [nd for nd in self.leaves() if self.growable(nd)]

    def has_empty_child(self) -> bool:
        """True if some internal node has a child with no in-window units.

        A child region is empty iff all leaves under it are empty, so it
        suffices to check the leaves.
        """
        return any(self.node_rows_iw(lf).size == 0 for lf in self.leaves())


# ---------------------------------------------------------------- tree prior


def split_prob(depth: int, alpha: float, beta: float) -> float:
    """Prior probability that a node at the given depth splits."""
    return alpha * (1.0 + depth) ** (-beta)


def log_tree_prior(tree: Tree, alpha: float, beta: float,
                   availability_aware: bool = False) -> float:
    """Log prior of the tree shape under the depth-decaying split probability.

    Sums log split probabilities over internal nodes and log stop
    probabilities over leaves. Split-rule selection probabilities are not
    included here; they enter the MH machinery through the proposal and prior
    ratios (see :func:`tree_rule_log_prob`).

    With ``availability_aware=True`` a leaf with no valid split contributes
    log(1) = 0, the convention under which the prior combined with rule
    probabilities is properly normalized on the reachable tree space.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    total = 0.0
    for nd in tree.nodes():
        p = split_prob(tree.depth[nd], alpha, beta)
        if tree.var[nd] != -1:
            total += np.log(p)
        else:
            if availability_aware and not tree.growable(nd):
                continue
            total += np.log1p(-p)
    return total


def tree_rule_log_prob(tree: Tree) -> float:
    """Log probability of the realized split rules under uniform selection.

    At each internal node the variable is uniform among variables with at
    least one valid threshold and the threshold uniform among that variable's
    valid thresholds, evaluated against the node's own in-window data.
    """
    total = 0.0
    for nd in tree.internal_nodes():
        total += _rule_log_prob(tree, nd, tree.var[nd])
    return total


def _subtree_log_prior(tree: Tree, node: int, alpha: float, beta: float) -> float:
    """Availability-aware log prior (shape + rules) of the subtree at ``node``."""
    total = 0.0
    stack = [node]
    while stack:
        nd = stack.pop()
        p = split_prob(tree.depth[nd], alpha, beta)
        if tree.var[nd] != -1:
            lr = _rule_log_prob(tree, nd, tree.var[nd])
            if lr == -np.inf:
                return -np.inf
            total += np.log(p) + lr
            stack.append(tree.left[nd])
            stack.append(tree.right[nd])
        else:
            if tree.growable(nd):
                total += np.log1p(-p)
    return total


# ------------------------------------------------------------------ proposals


@dataclass
class Proposal:
    """A structural MH proposal with the ratios needed for exact acceptance.

    ``log_prior_ratio + log_proposal_ratio`` plus the marginal-likelihood
    difference gives the log acceptance probability. ``valid=False`` marks a
    proposal that produced an empty-data child; it must be rejected.
    """

    kind: str
    tree: Tree
    log_proposal_ratio: float
    log_prior_ratio: float
    valid: bool = True


def _kind_probs(tree: Tree) -> dict[str, float]:
    avail = {}
    if tree.growable_leaves():
        avail[GROW] = MOVE_PROBS[GROW]
    if tree.var[0] != -1:  # any internal node
        avail[PRUNE] = MOVE_PROBS[PRUNE]
        avail[CHANGE] = MOVE_PROBS[CHANGE]
        if tree.swap_pairs():
            avail[SWAP] = MOVE_PROBS[SWAP]
    total = sum(avail.values())
    return {k: v / total for k, v in avail.items()} if total else {}


def _choose(rng: np.random.Generator, items):
    return items[int(rng.integers(len(items)))]


def _draw_rule(tree: Tree, node: int, rng: np.random.Generator):
    """Uniform variable among available, uniform valid threshold; with log prob."""
    lo, hi = tree._bounds(node)
    avail_vars = np.flatnonzero(hi > lo)
    var = int(_choose(rng, avail_vars))
    j = lo[var] + int(rng.integers(hi[var] - lo[var]))
    thr = float(tree.data.candidates[var][j])
    logp = -np.log(avail_vars.size) - np.log(hi[var] - lo[var])
    return var, thr, logp


def _rule_log_prob(tree: Tree, node: int, var: int) -> float:
    """Log probability of drawing a rule on ``var`` at ``node`` (threshold fixed)."""
    lo, hi = tree._bounds(node)
    counts = hi - lo
    avail = int((counts > 0).sum())
    if avail == 0 or counts[var] == 0:
        return -np.inf
    return -float(np.log(avail) + np.log(counts[var]))


def propose_move(tree: Tree, alpha: float, beta: float,
                 rng: np.random.Generator) -> Proposal | None:
    """Draw a grow/prune/change/swap proposal with exact MH bookkeeping.

    Returns None when no structural move is possible (degenerate data), which
    the caller treats as a rejected step.
    """
    probs = _kind_probs(tree)
    if not probs:
        return None
    kinds = sorted(probs)
    u = rng.uniform()
    acc = 0.0
    kind = kinds[-1]
    for k in kinds:
        acc += probs[k]
        if u < acc:
            kind = k
            break

    if kind == GROW:
        leaves = tree.growable_leaves()
        leaf = int(_choose(rng, leaves))
        var, thr, log_rule = _draw_rule(tree, leaf, rng)
        new = tree.clone()
        new.grow(leaf, var, thr)
        d = tree.depth[leaf]
        log_fwd = np.log(probs[GROW]) - np.log(len(leaves)) + log_rule
        rev_probs = _kind_probs(new)
        log_rev = np.log(rev_probs[PRUNE]) - np.log(len(new.nog_nodes()))
        # prior: leaf stop factor replaced by split + rule + children stops
        lp = np.log(split_prob(d, alpha, beta)) + log_rule
        for child in (new.left[leaf], new.right[leaf]):
            if new.growable(child):
                lp += np.log1p(-split_prob(new.depth[child], alpha, beta))
        lp -= np.log1p(-split_prob(d, alpha, beta))
        return Proposal(GROW, new, log_rev - log_fwd, lp)

    if kind == PRUNE:
        nogs = tree.nog_nodes()
        node = int(_choose(rng, nogs))
        new = tree.clone()
        lo, hi = tree.left[node], tree.right[node]
        lo_growable = tree.growable(lo)
        hi_growable = tree.growable(hi)
        new.prune(node)
        d = tree.depth[node]
        log_fwd = np.log(probs[PRUNE]) - np.log(len(nogs))
        rev_probs = _kind_probs(new)
        log_rule = _rule_log_prob(new, node, tree.var[node])
        log_rev = (
            np.log(rev_probs[GROW]) - np.log(len(new.growable_leaves())) + log_rule
        )
        lp = np.log1p(-split_prob(d, alpha, beta))
        lp -= np.log(split_prob(d, alpha, beta)) + log_rule
        if lo_growable:
            lp -= np.log1p(-split_prob(d + 1, alpha, beta))
        if hi_growable:
            lp -= np.log1p(-split_prob(d + 1, alpha, beta))
        return Proposal(PRUNE, new, log_rev - log_fwd, lp)

    if kind == CHANGE:
        internals = tree.internal_nodes()
        node = int(_choose(rng, internals))
        var, thr, log_rule_new = _draw_rule(tree, node, rng)
        new = tree.clone()
        new.change(node, var, thr)
        if new.has_empty_child():
            return Proposal(CHANGE, new, 0.0, -np.inf, valid=False)
        # the node's own data is identical in T and T*, so the old rule's
        # selection probability can be evaluated on either tree
        log_rule_old = _rule_log_prob(tree, node, tree.var[node])
        rev_probs = _kind_probs(new)
        log_q = (
            np.log(rev_probs[CHANGE]) - np.log(probs[CHANGE]) + log_rule_old - log_rule_new
        )
        lp = _subtree_log_prior(new, node, alpha, beta) - _subtree_log_prior(
            tree, node, alpha, beta
        )
        return Proposal(CHANGE, new, log_q, lp)

    # SWAP
    pairs = tree.swap_pairs()
    parent, child = pairs[int(rng.integers(len(pairs)))]
    new = tree.clone()
    new.swap(parent, child)
    if new.has_empty_child():
        return Proposal(SWAP, new, 0.0, -np.inf, valid=False)
    # shape unchanged -> same number of swap pairs; kind probabilities may
    # still differ if leaf growability changed under the re-routed subtree
    rev_probs = _kind_probs(new)
    log_q = np.log(rev_probs[SWAP]) - np.log(probs[SWAP])
    lp = _subtree_log_prior(new, parent, alpha, beta) - _subtree_log_prior(
        tree, parent, alpha, beta
    )
    return Proposal(SWAP, new, log_q, lp)


def assign_region(tree: Tree, z: np.ndarray) -> int:
    """Leaf index a covariate vector is routed to (deterministic, total)."""
    return tree.leaf_of(z)
