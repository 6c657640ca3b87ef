"""Sum-of-trees conditional mean sampled by Metropolis-Hastings backfitting.

Each regression tree carries the regularization prior in which a node at
depth d is internal with probability a * (1 + d)^(-b), split variables are
uniform over the splittable columns, and thresholds are uniform over the
midpoints of consecutive sorted unique values of the chosen column.  Trees
are updated one at a time against their partial residuals with the leaf
values integrated out in closed form (Gaussian-Gaussian conjugacy with
per-row variances), then leaf values are redrawn from their conjugate
posteriors.

Proposals that would leave an in-sample leaf empty are rejected, so every
reachable tree keeps at least one observation per leaf; this keeps the
state space finite and enumerable.  ``sample_leaf_params`` still handles
empty leaves (prior draw) because re-routing under a changed design can
produce them.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log, log1p, sqrt

import numpy as np

MOVES = ("grow", "merge", "change", "swap")


@dataclass
class BartConfig:
    n_trees: int = 250
    a: float = 0.95
    b: float = 2.0
    gamma: float = 2.0
    p_grow: float = 0.25
    p_merge: float = 0.25
    p_change: float = 0.4
    p_swap: float = 0.1

    def __post_init__(self):
        probs = (self.p_grow, self.p_merge, self.p_change, self.p_swap)
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("move probabilities must sum to 1")
        if not 0.0 < self.a < 1.0 or self.b <= 0:
            raise ValueError("need a in (0,1) and b > 0")

    def move_probs(self) -> np.ndarray:
        return np.array([self.p_grow, self.p_merge, self.p_change, self.p_swap])

    def leaf_variance(self, y_range: float) -> float:
        """Prior leaf variance R^2 / (4 gamma^2 S) for target range R.

        Floored away from zero so a degenerate target cannot produce an
        improper leaf prior.
        """
        return max(y_range**2 / (4.0 * self.gamma**2 * self.n_trees), 1e-10)


class Node:
    __slots__ = ("var", "threshold", "left", "right", "mu")

    def __init__(self, var=None, threshold=None, left=None, right=None, mu=0.0):
        self.var = var
        self.threshold = threshold
        self.left = left
        self.right = right
        self.mu = mu

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def clone(self) -> "Node":
        if self.is_leaf:
            return Node(mu=self.mu)
        return Node(self.var, self.threshold, self.left.clone(), self.right.clone(), self.mu)


@dataclass
class BartData:
    """Design-bound proposal sets: cutpoints and splittable columns."""

    X: np.ndarray
    cutpoints: list[np.ndarray]
    splittable: np.ndarray

    @classmethod
    def from_design(cls, X: np.ndarray) -> "BartData":
        X = np.asarray(X, dtype=float)
        cuts = []
        for j in range(X.shape[1]):
            u = np.unique(X[:, j])
            cuts.append((u[1:] + u[:-1]) / 2.0 if len(u) > 1 else np.empty(0))
        splittable = np.array([j for j, c in enumerate(cuts) if len(c)], dtype=int)
        if len(splittable) == 0:
            raise ValueError("no column of the design has more than one distinct value")
        return cls(X=X, cutpoints=cuts, splittable=splittable)

    def n_cuts(self, var: int) -> int:
        return len(self.cutpoints[var])


class RegressionTree:
    """Binary tree with cached in-sample leaf partition."""

    def __init__(self, root: Node | None = None):
        self.root = root if root is not None else Node()
        self._partition: list[tuple[Node, np.ndarray]] | None = None

    # -- traversal -------------------------------------------------------
    def walk(self):
        """Yield (node, depth) in preorder."""
        stack = [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            yield node, d
            if not node.is_leaf:
                stack.append((node.right, d + 1))
                stack.append((node.left, d + 1))

    def leaves(self) -> list[Node]:
        return [n for n, _ in self.walk() if n.is_leaf]

    def internal(self) -> list[Node]:
        return [n for n, _ in self.walk() if not n.is_leaf]

    def prunable(self) -> list[Node]:
        """Internal nodes whose children are both leaves."""
        return [
            n for n, _ in self.walk() if not n.is_leaf and n.left.is_leaf and n.right.is_leaf
        ]

    def swappable(self) -> list[tuple[Node, Node]]:
        out = []
        for n, _ in self.walk():
            if n.is_leaf:
                continue
            for child in (n.left, n.right):
                if not child.is_leaf:
                    out.append((n, child))
        return out

    def depth_of(self, target: Node) -> int:
        for n, d in self.walk():
            if n is target:
                return d
        raise ValueError("node not in tree")

    # -- data routing ----------------------------------------------------
    def partition(self, X: np.ndarray) -> list[tuple[Node, np.ndarray]]:
        if self._partition is None:
            rows = np.arange(X.shape[0])
            out: list[tuple[Node, np.ndarray]] = []
            stack = [(self.root, rows)]
            while stack:
                node, r = stack.pop()
                if node.is_leaf:
                    out.append((node, r))
                else:
                    mask = X[r, node.var] <= node.threshold
                    stack.append((node.right, r[~mask]))
                    stack.append((node.left, r[mask]))
            self._partition = out
        return self._partition

    def invalidate(self) -> None:
        self._partition = None

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, r = stack.pop()
            if node.is_leaf:
                out[r] = node.mu
            else:
                mask = X[r, node.var] <= node.threshold
                stack.append((node.right, r[~mask]))
                stack.append((node.left, r[mask]))
        return out

    def fitted(self, data: BartData) -> np.ndarray:
        out = np.empty(data.X.shape[0])
        for node, rows in self.partition(data.X):
            out[rows] = node.mu
        return out

    def clone(self) -> "RegressionTree":
        return RegressionTree(self.root.clone())


def p_split(depth: int, config: BartConfig) -> float:
    return config.a * (1.0 + depth) ** (-config.b)


def _leaf_collapsed(rows, resid, inv_sig, v_mu):
    """Leaf contribution to the collapsed log likelihood, constants dropped."""
    if len(rows) == 0:
        return 0.0
    g = inv_sig[rows]
    A = 1.0 / v_mu + g.sum()
    B = float(resid[rows] @ g)
    return -0.5 * log(v_mu * A) + B * B / (2.0 * A)


def collapsed_loglik(tree: RegressionTree, data: BartData, resid, inv_sig, v_mu) -> float:
    return sum(
        _leaf_collapsed(rows, resid, inv_sig, v_mu) for _, rows in tree.partition(data.X)
    )


def _scan(tree: RegressionTree):
    """One traversal collecting node roles and depths.

    Returns (leaves, internal, prunable, swappable, depth_by_id) with the
    same deterministic preorder as the individual accessors.
    """
    leaves, internal, prunable, swappable = [], [], [], []
    depth_by_id = {}
    stack = [(tree.root, 0)]
    while stack:
        node, d = stack.pop()
        depth_by_id[id(node)] = d
        if node.is_leaf:
            leaves.append(node)
            continue
        internal.append(node)
        if node.left.is_leaf and node.right.is_leaf:
            prunable.append(node)
        for child in (node.left, node.right):
            if not child.is_leaf:
                swappable.append((node, child))
        stack.append((node.right, d + 1))
        stack.append((node.left, d + 1))
    return leaves, internal, prunable, swappable, depth_by_id


def _log_alpha_grow(tree, data, resid, inv_sig, v_mu, config, leaf, rows, var, cut, scan=None):
    """Log MH ratio for growing ``leaf`` with rule (var, cut); None if invalid."""
    mask = data.X[rows, var] <= cut
    left_rows, right_rows = rows[mask], rows[~mask]
    if len(left_rows) == 0 or len(right_rows) == 0:
        return None, None
    leaves, _, prunable, _, depth_by_id = scan if scan is not None else _scan(tree)
    d = depth_by_id[id(leaf)]
    ps, ps_child = p_split(d, config), p_split(d + 1, config)
    n_rule = len(data.splittable) * data.n_cuts(var)
    log_prior = log(ps) + 2.0 * log1p(-ps_child) - log1p(-ps) - log(n_rule)
    log_lik = (
        _leaf_collapsed(left_rows, resid, inv_sig, v_mu)
        + _leaf_collapsed(right_rows, resid, inv_sig, v_mu)
        - _leaf_collapsed(rows, resid, inv_sig, v_mu)
    )
    n_prunable_new = len(prunable) + 1 - _parent_prunable(tree, leaf)
    log_q_fwd = -log(len(leaves)) - log(n_rule)
    log_q_rev = -log(n_prunable_new)
    log_alpha = (
        log_prior + log_lik + log(config.p_merge) + log_q_rev - log(config.p_grow) - log_q_fwd
    )
    return log_alpha, (left_rows, right_rows)


def _parent_prunable(tree: RegressionTree, leaf: Node) -> bool:
    """True if the leaf's parent currently has two leaf children."""
    for n, _ in tree.walk():
        if not n.is_leaf and (n.left is leaf or n.right is leaf):
            return n.left.is_leaf and n.right.is_leaf
    return False


def _log_alpha_merge(tree, data, resid, inv_sig, v_mu, config, node, part_by_id, scan=None):
    leaves, _, prunable, _, depth_by_id = scan if scan is not None else _scan(tree)
    d = depth_by_id[id(node)]
    rows = np.concatenate([part_by_id[id(node.left)], part_by_id[id(node.right)]])
    ps, ps_child = p_split(d, config), p_split(d + 1, config)
    n_rule = len(data.splittable) * data.n_cuts(node.var)
    log_prior = -(log(ps) + 2.0 * log1p(-ps_child) - log1p(-ps) - log(n_rule))
    log_lik = (
        _leaf_collapsed(rows, resid, inv_sig, v_mu)
        - _leaf_collapsed(part_by_id[id(node.left)], resid, inv_sig, v_mu)
        - _leaf_collapsed(part_by_id[id(node.right)], resid, inv_sig, v_mu)
    )
    log_q_fwd = -log(len(prunable))
    log_q_rev = -log(len(leaves) - 1) - log(n_rule)
    log_alpha = (
        log_prior + log_lik + log(config.p_grow) + log_q_rev - log(config.p_merge) - log_q_fwd
    )
    return log_alpha, rows


def tree_mh_step(
    tree: RegressionTree,
    data: BartData,
    resid: np.ndarray,
    sigma2,
    config: BartConfig,
    v_mu: float,
    rng: np.random.Generator,
    _cum_probs: np.ndarray | None = None,
    _inv_sig: np.ndarray | None = None,
) -> tuple[RegressionTree, bool, str]:
    """One structural Metropolis-Hastings move on ``tree``.

    Infeasible proposals (no candidate set, or a move that empties a leaf)
    count as rejections and leave the tree unchanged.
    """
    inv_sig = _inv_sig if _inv_sig is not None else 1.0 / np.asarray(sigma2, dtype=float)
    cum = _cum_probs if _cum_probs is not None else np.cumsum(config.move_probs())
    move = MOVES[int(np.searchsorted(cum, rng.random(), side="right"))]
    part = tree.partition(data.X)
    part_by_id = {id(node): rows for node, rows in part}
    scan = _scan(tree)
    leaves, internal, prunable, swappable, _ = scan

    if move == "grow":
        leaf = leaves[rng.integers(len(leaves))]
        var = int(data.splittable[rng.integers(len(data.splittable))])
        cut = float(data.cutpoints[var][rng.integers(data.n_cuts(var))])
        log_alpha, _ = _log_alpha_grow(
            tree, data, resid, inv_sig, v_mu, config, leaf, part_by_id[id(leaf)], var, cut, scan
        )
        if log_alpha is not None and log(rng.random() + 1e-300) < log_alpha:
            leaf.var, leaf.threshold = var, cut
            leaf.left, leaf.right = Node(), Node()
            tree.invalidate()
            return tree, True, move
        return tree, False, move

    if move == "merge":
        if not prunable:
            return tree, False, move
        node = prunable[rng.integers(len(prunable))]
        log_alpha, _ = _log_alpha_merge(
            tree, data, resid, inv_sig, v_mu, config, node, part_by_id, scan
        )
        if log(rng.random() + 1e-300) < log_alpha:
            node.var = node.threshold = None
            node.left = node.right = None
            tree.invalidate()
            return tree, True, move
        return tree, False, move

    if move == "change":
        if not internal:
            return tree, False, move
        idx = int(rng.integers(len(internal)))
        var = int(data.splittable[rng.integers(len(data.splittable))])
        cut = float(data.cutpoints[var][rng.integers(data.n_cuts(var))])
        node = internal[idx]
        proposal = tree.clone()
        pnode = _scan(proposal)[1][idx]
        pnode.var, pnode.threshold = var, cut
        if any(len(rows) == 0 for _, rows in proposal.partition(data.X)):
            return tree, False, move
        cur = collapsed_loglik(tree, data, resid, inv_sig, v_mu)
        new = collapsed_loglik(proposal, data, resid, inv_sig, v_mu)
        # rule-prior and proposal terms in the two cutpoint counts cancel
        if log(rng.random() + 1e-300) < new - cur:
            node.var, node.threshold = var, cut
            tree.invalidate()
            return tree, True, move
        return tree, False, move

    # swap
    if not swappable:
        return tree, False, move
    idx = int(rng.integers(len(swappable)))
    proposal = tree.clone()
    pa, ch = _scan(proposal)[3][idx]
    pa.var, pa.threshold, ch.var, ch.threshold = ch.var, ch.threshold, pa.var, pa.threshold
    if any(len(rows) == 0 for _, rows in proposal.partition(data.X)):
        return tree, False, move
    cur = collapsed_loglik(tree, data, resid, inv_sig, v_mu)
    new = collapsed_loglik(proposal, data, resid, inv_sig, v_mu)
    if log(rng.random() + 1e-300) < new - cur:
        parent, child = swappable[idx]
        parent.var, parent.threshold, child.var, child.threshold = (
            child.var,
            child.threshold,
            parent.var,
            parent.threshold,
        )
        tree.invalidate()
        return tree, True, move
    return tree, False, move


def sample_leaf_params(
    tree: RegressionTree,
    data: BartData,
    resid: np.ndarray,
    sigma2,
    v_mu: float,
    rng: np.random.Generator,
    _inv_sig: np.ndarray | None = None,
) -> RegressionTree:
    """Draw every leaf value from its conjugate Gaussian posterior.

    Leaves with no assigned rows draw from the prior N(0, v_mu).
    """
    inv_sig = _inv_sig if _inv_sig is not None else 1.0 / np.asarray(sigma2, dtype=float)
    normals = rng.standard_normal(len(tree.partition(data.X)))
    for i, (node, rows) in enumerate(tree.partition(data.X)):
        if len(rows) == 0:
            node.mu = sqrt(v_mu) * normals[i]
            continue
        g = inv_sig[rows]
        A = 1.0 / v_mu + g.sum()
        B = float(resid[rows] @ g)
        node.mu = B / A + normals[i] / sqrt(A)
    return tree


class Forest:
    """S trees plus their cached fitted vectors."""

    def __init__(self, data: BartData, config: BartConfig, y_range: float):
        self.data = data
        self.config = config
        self.v_mu = config.leaf_variance(y_range)
        self.trees = [RegressionTree() for _ in range(config.n_trees)]
        self.fits = np.zeros((config.n_trees, data.X.shape[0]))
        self.accept_count = 0
        self.step_count = 0

    def total_fit(self) -> np.ndarray:
        return self.fits.sum(axis=0)

    def sweep(self, y: np.ndarray, sigma2: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One backfitting pass over all trees; returns the summed fit."""
        total = self.total_fit()
        inv_sig = 1.0 / np.asarray(sigma2, dtype=float)
        cum = np.cumsum(self.config.move_probs())
        for s, tree in enumerate(self.trees):
            resid = y - (total - self.fits[s])
            _, accepted, _ = tree_mh_step(
                tree, self.data, resid, None, self.config, self.v_mu, rng,
                _cum_probs=cum, _inv_sig=inv_sig,
            )
            sample_leaf_params(
                tree, self.data, resid, None, self.v_mu, rng, _inv_sig=inv_sig
            )
            new_fit = tree.fitted(self.data)
            total += new_fit - self.fits[s]
            self.fits[s] = new_fit
            self.accept_count += accepted
            self.step_count += 1
        return total

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += tree.evaluate(X)
        return out

    def refresh_fits(self) -> None:
        """Recompute cached partitions and fits (after the design changed)."""
        for s, tree in enumerate(self.trees):
            tree.invalidate()
            self.fits[s] = tree.fitted(self.data)


def bart_sweep(
    forest: Forest, y: np.ndarray, sigma2: np.ndarray, rng: np.random.Generator
) -> tuple[Forest, np.ndarray]:
    """One full backfitting pass; returns the forest and its summed fit."""
    fit = forest.sweep(y, sigma2, rng)
    return forest, fit
