"""Causal Bayesian networks with hidden confounders.

Every hidden variable is a source with exactly two observable children, so
the observable graph is an ADMG: directed edges between observables plus a
bidirected edge for each hidden source.  Exact quantities are computed by
tensor contraction over the full assignment space, which is guarded by
:data:`ENUM_LIMIT_BITS`.
"""

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _guard
from .core import DiscreteDistribution, Sampler, estimate_tv
from .errors import ParameterError, PreconditionError, SizeError
from .rng import as_generator

ENUM_LIMIT_BITS = 22


def _topological(nodes, parents):
    """Kahn's algorithm, ties broken by position in ``nodes``."""
    pos = {v: i for i, v in enumerate(nodes)}
    indeg = {v: len(parents[v]) for v in nodes}
    kids = {v: [] for v in nodes}
    for v in nodes:
        for p in parents[v]:
            kids[p].append(v)
    ready = sorted((v for v in nodes if indeg[v] == 0), key=pos.get)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for c in kids[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
        ready.sort(key=pos.get)
    if len(order) != len(nodes):
        raise ParameterError("directed graph has a cycle")
    return tuple(order)


@dataclass(frozen=True)
class Admg:
    """Acyclic directed mixed graph over named observables."""

    v: tuple
    directed: tuple = ()
    bidirected: tuple = ()

    def __post_init__(self):
        v = tuple(self.v)
        if len(set(v)) != len(v):
            raise ParameterError("duplicate node names")
        names = set(v)
        directed = tuple((a, b) for a, b in self.directed)
        bidirected = tuple(tuple(e) for e in self.bidirected)
        for a, b in directed + bidirected:
            if a not in names or b not in names:
                raise ParameterError(f"edge ({a}, {b}) mentions an unknown node")
            if a == b:
                raise ParameterError(f"self-loop at {a}")
        bidirected = tuple(tuple(sorted(e, key=v.index)) for e in bidirected)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "directed", tuple(dict.fromkeys(directed)))
        object.__setattr__(self, "bidirected", tuple(dict.fromkeys(bidirected)))
        _topological(v, {x: self.parents(x) for x in v})

    def parents(self, x):
        return tuple(a for a, b in self.directed if b == x)

    def children(self, x):
        return tuple(b for a, b in self.directed if a == x)

    def spouses(self, x):
        return tuple(b if a == x else a for a, b in self.bidirected if x in (a, b))

    @property
    def in_degree(self):
        return max((len(self.parents(x)) for x in self.v), default=0)

    def check_node(self, x):
        if x not in self.v:
            raise ParameterError(f"{x!r} is not an observable node")


def c_components(admg):
    """Connected components of the bidirected part, ordered by smallest member."""
    seen, comps = set(), []
    for start in admg.v:
        if start in seen:
            continue
        comp, queue = [], deque([start])
        seen.add(start)
        while queue:
            x = queue.popleft()
            comp.append(x)
            for y in admg.spouses(x):
                if y not in seen:
                    seen.add(y)
                    queue.append(y)
        comps.append(tuple(sorted(comp, key=admg.v.index)))
    return comps


def component_of(admg, x):
    admg.check_node(x)
    return next(c for c in c_components(admg) if x in c)


def children_in_component(admg, a):
    """Children of ``a`` sharing its c-component (empty iff identifiable)."""
    comp = set(component_of(admg, a))
    return tuple(c for c in admg.children(a) if c in comp)


def children_on_bidirected_path(admg, a):
    """Children of ``a`` reachable from ``a`` along bidirected edges."""
    admg.check_node(a)
    reached, queue = {a}, deque([a])
    while queue:
        for y in admg.spouses(queue.popleft()):
            if y not in reached:
                reached.add(y)
                queue.append(y)
    return tuple(c for c in admg.children(a) if c in reached)


def check_identifiability(admg, a):
    """True iff no child of ``a`` lies in ``a``'s c-component.

    Computed both through the component partition and by a bidirected-path
    search; the two must agree.
    """
    by_component = children_in_component(admg, a)
    by_path = children_on_bidirected_path(admg, a)
    if set(by_component) != set(by_path):
        raise AssertionError(f"identifiability formulations disagree at {a!r}")
    return not by_component


@dataclass(frozen=True)
class Hidden:
    name: str
    children: tuple
    dist: np.ndarray

    def __post_init__(self):
        d = np.array(self.dist, dtype=np.float64)
        if d.ndim != 1 or len(d) < 1 or np.any(d < 0) or abs(d.sum() - 1) > 1e-9:
            raise ParameterError(f"hidden {self.name!r} needs a probability vector")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) != 2 or self.children[0] == self.children[1]:
            raise ParameterError(f"hidden {self.name!r} must have exactly two distinct observable children")


@dataclass(frozen=True)
class Intervention:
    node: str
    value: int


class Cbn:
    """Causal Bayesian network over observables ``v`` and hidden sources.

    :param parents: ``{node: (parent, ...)}``; parents may name observables
        or hidden sources, and fix the axis order of that node's CPT.
    :param cpt: ``{node: array}`` of shape ``(card(parent), ...) + (k,)``.
    """

    def __init__(self, v, parents, cpt, hidden=(), alphabet_size=2):
        self.v = tuple(v)
        self.k = int(alphabet_size)
        if self.k < 2:
            raise ParameterError("alphabet must have at least two symbols")
        self.hidden = tuple(hidden)
        hnames = {h.name: h for h in self.hidden}
        if len(hnames) != len(self.hidden) or set(hnames) & set(self.v):
            raise ParameterError("node names must be unique across observables and hidden sources")
        self.parents = {x: tuple(parents.get(x, ())) for x in self.v}
        for x, ps in self.parents.items():
            for p in ps:
                if p not in hnames and p not in self.v:
                    raise ParameterError(f"{x!r} has unknown parent {p!r}")
        for h in self.hidden:
            kids = tuple(x for x in self.v if h.name in self.parents[x])
            if set(kids) != set(h.children):
                raise ParameterError(f"hidden {h.name!r} declares children {h.children} but feeds {kids}")
        self.card = {x: self.k for x in self.v} | {h.name: len(h.dist) for h in self.hidden}
        self.cpt = {}
        for x in self.v:
            shape = tuple(self.card[p] for p in self.parents[x]) + (self.k,)
            t = np.array(cpt[x], dtype=np.float64)
            if t.shape != shape:
                raise ParameterError(f"CPT of {x!r} has shape {t.shape}, expected {shape}")
            if np.any(t < 0) or np.max(np.abs(t.sum(axis=-1) - 1), initial=0.0) > 1e-9:
                raise ParameterError(f"CPT rows of {x!r} must be probability vectors")
            t.setflags(write=False)
            self.cpt[x] = t
        self.order = _topological(self.v + tuple(hnames),
                                  {**self.parents, **{h: () for h in hnames}})
        self.admg = Admg(self.v,
                         tuple((p, x) for x in self.v for p in self.parents[x] if p in self.parents),
                         tuple(h.children for h in self.hidden))

    def __repr__(self):
        return f"Cbn(v={self.v}, hidden={[h.name for h in self.hidden]}, k={self.k})"

    @property
    def assignment_bits(self):
        return sum(math.log2(c) for c in self.card.values())

    def check_intervention(self, iv):
        if iv is None:
            return
        self.admg.check_node(iv.node)
        if not 0 <= iv.value < self.k:
            raise ParameterError(f"intervention value {iv.value} outside the alphabet")

    def _guard(self):
        limit = _guard.enumeration_limit(ENUM_LIMIT_BITS)
        bits = self.assignment_bits
        if bits > limit + 1e-9:
            raise SizeError(f"enumerating {len(self.card)} variables needs {bits:g} bits > limit {limit}",
                            bits=bits, limit=limit)

    def joint_tensor(self, iv=None):
        """Tensor over the observables (axis order ``v``), hidden sources summed out."""
        self.check_intervention(iv)
        self._guard()
        axis = {x: i for i, x in enumerate(self.v + tuple(h.name for h in self.hidden))}
        operands = []
        for x in self.v:
            if iv is not None and x == iv.node:
                operands += [np.eye(self.k)[iv.value], [axis[x]]]
            else:
                operands += [self.cpt[x], [axis[p] for p in self.parents[x]] + [axis[x]]]
        for h in self.hidden:
            operands += [h.dist, [axis[h.name]]]
        return np.einsum(*operands, list(range(len(self.v))), optimize=True)

    def sample(self, rng, size, iv=None):
        """``(size, |v|)`` array of observable draws, optionally under ``do(iv)``."""
        self.check_intervention(iv)
        rng = as_generator(rng)
        vals = {}
        for x in self.order:
            if x in self.cpt:
                if iv is not None and x == iv.node:
                    vals[x] = np.full(size, iv.value, dtype=np.int64)
                    continue
                rows = self.cpt[x][tuple(vals[p] for p in self.parents[x])] if self.parents[x] \
                    else np.broadcast_to(self.cpt[x], (size, self.k))
                cdf = np.cumsum(rows, axis=1)
                u = rng.random(size)[:, None] * cdf[:, -1:]
                vals[x] = np.minimum((u >= cdf).sum(axis=1), self.k - 1)
            else:
                d = next(h.dist for h in self.hidden if h.name == x)
                vals[x] = rng.choice(len(d), size=size, p=d)
        return np.stack([vals[x] for x in self.v], axis=1)


def _tensor_to_dist(T):
    support = [tuple(int(i) for i in idx) for idx in np.ndindex(T.shape)]
    return DiscreteDistribution(support, T.ravel(), normalize=True)


def interventional_distribution(cbn, iv):
    """``P_a`` over assignments to ``v``; ``iv=None`` gives the observational joint."""
    return _tensor_to_dist(cbn.joint_tensor(iv))


def interventional_sample(cbn, iv, rng):
    return tuple(int(x) for x in cbn.sample(rng, 1, iv)[0])


def check_strong_positivity(cbn, a, alpha):
    """``min_z P(Z = z) > alpha`` over ``Z = S1 + Pa(S1)``, S1 the c-component of ``a``."""
    s1 = component_of(cbn.admg, a)
    pa = [p for x in s1 for p in cbn.admg.parents(x) if p not in s1]
    z = [x for x in cbn.v if x in s1 or x in pa]
    T = cbn.joint_tensor()
    drop = tuple(i for i, x in enumerate(cbn.v) if x not in z)
    return bool(T.sum(axis=drop).min() > alpha)


def require_identifiable(cbn, a):
    bad = children_in_component(cbn.admg, a)
    if bad:
        raise PreconditionError(f"do({a}) is not identifiable: child {bad[0]!r} shares the c-component "
                                f"{component_of(cbn.admg, a)}")


def estimate_tv_interventional(cbn_P, cbn_Q, iv, epsilon, delta, rng=None, *,
                               eval_P=None, eval_Q=None, sampler_P=None):
    """Estimate ``d_TV(P_a, Q_a)`` between two interventional distributions.

    By default the evaluators are exact (enumerated) and the sampler draws
    from ``cbn_P`` under the intervention.  Any of the three may be replaced
    by externally built approximators; their ``beta``/``gamma`` then enter
    the reported ``extra_error``.
    """
    for cbn in (cbn_P, cbn_Q):
        cbn.check_intervention(iv)
        require_identifiable(cbn, iv.node)
    if cbn_P.v != cbn_Q.v or cbn_P.k != cbn_Q.k:
        raise ParameterError("models must share observables and alphabet")
    if eval_P is None:
        eval_P = interventional_distribution(cbn_P, iv).evaluator()
    if eval_Q is None:
        eval_Q = interventional_distribution(cbn_Q, iv).evaluator()
    if sampler_P is None:
        sampler_P = Sampler(lambda r: interventional_sample(cbn_P, iv, r), f"do({iv.node}={iv.value}) on P",
                            batch=lambda r, size: [tuple(row) for row in cbn_P.sample(r, size, iv).tolist()])
    return estimate_tv(sampler_P, eval_P, eval_Q, epsilon, delta, rng)


def random_cbn(n, d, k, rng, hidden=0, names=None):
    """Random CBN: ``n`` observables in index order with up to ``d`` observable
    parents each, plus ``hidden`` confounders over random observable pairs."""
    rng = as_generator(rng)
    names = tuple(names or [f"X{i}" for i in range(n)])
    parents = {}
    for i, x in enumerate(names):
        m = min(d, i)
        picks = sorted(rng.choice(i, size=rng.integers(0, m + 1), replace=False)) if m else []
        parents[x] = tuple(names[j] for j in picks)
    hid = []
    for j in range(hidden):
        a, b = sorted(rng.choice(n, size=2, replace=False))
        h = Hidden(f"U{j}", (names[a], names[b]), rng.dirichlet(np.ones(k)))
        hid.append(h)
        for c in h.children:
            parents[c] = parents[c] + (h.name,)
    card = {x: k for x in names} | {h.name: k for h in hid}
    cpt = {x: rng.dirichlet(np.ones(k), size=tuple(card[p] for p in parents[x])) for x in names}
    return Cbn(names, parents, cpt, hid, k)
