"""Bayesian networks on a known DAG.

Conditional probability tables are stored as arrays of shape
``(k,) * deg(i) + (k,)``: the leading axes index the parent values in the
order given by ``dag.parents[i]``, the last axis the node's own symbol.
Samples are integer arrays of shape ``(m, n)``.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import _guard
from .core import (
    DiscreteDistribution,
    EvalApproximator,
    Sampler,
    TvEstimate,
    estimate_tv,
    exact_kl,
    laplace_estimate,
    median_repetitions,
    required_samples,
)
from .errors import ParameterError
from .rng import as_generator

JOINT_LIMIT_BITS = 20
KL_EXACT_LIMIT_BITS = 24


@dataclass(frozen=True)
class Dag:
    parents: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        parents = tuple(tuple(int(p) for p in ps) for ps in self.parents)
        n = len(parents)
        for i, ps in enumerate(parents):
            if len(set(ps)) != len(ps):
                raise ParameterError(f"node {i} lists a parent twice")
            for p in ps:
                if not 0 <= p < n or p == i:
                    raise ParameterError(f"node {i} has invalid parent {p}")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "topo_order", self._topological_order())

    def _topological_order(self):
        n = len(self.parents)
        remaining = [len(ps) for ps in self.parents]
        children = [[] for _ in range(n)]
        for i, ps in enumerate(self.parents):
            for p in ps:
                children[p].append(i)
        ready = sorted(i for i in range(n) if remaining[i] == 0)
        order = []
        while ready:
            i = ready.pop(0)
            order.append(i)
            for c in children[i]:
                remaining[c] -= 1
                if remaining[c] == 0:
                    ready.append(c)
            ready.sort()
        if len(order) != n:
            raise ParameterError("parent lists contain a directed cycle")
        return tuple(order)

    @property
    def n(self):
        return len(self.parents)

    @property
    def in_degree(self):
        return max((len(ps) for ps in self.parents), default=0)

    @classmethod
    def empty(cls, n):
        return cls(tuple(() for _ in range(n)))

    @classmethod
    def chain(cls, n):
        return cls(tuple(() if i == 0 else (i - 1,) for i in range(n)))

    @classmethod
    def star(cls, n, center=0):
        return cls(tuple(() if i == center else (center,) for i in range(n)))


@dataclass(frozen=True)
class ParentEvent:
    """The event that node ``node``'s parents take the values ``assignment``."""

    node: int
    assignment: Tuple[int, ...]
    probability: float


class BayesNet:
    def __init__(self, dag, alphabet_size, cpt, *, normalize=False):
        if alphabet_size < 2:
            raise ParameterError("alphabet must have at least two symbols")
        k = int(alphabet_size)
        if len(cpt) != dag.n:
            raise ParameterError(f"expected {dag.n} tables, got {len(cpt)}")
        tables = []
        for i, table in enumerate(cpt):
            deg = len(dag.parents[i])
            table = np.array(table, dtype=np.float64).reshape((k,) * deg + (k,))
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise ParameterError(f"node {i} has a negative or non-finite entry")
            sums = table.sum(axis=-1, keepdims=True)
            if normalize:
                table = table / sums
            elif np.max(np.abs(sums - 1.0)) > 1e-12:
                raise ParameterError(f"node {i} has a row not summing to 1")
            table.setflags(write=False)
            tables.append(table)
        self.dag = dag
        self.alphabet_size = k
        self.cpt = tuple(tables)

    def __repr__(self):
        return f"BayesNet(n={self.n}, alphabet={self.alphabet_size}, d={self.dag.in_degree})"

    @property
    def n(self):
        return self.dag.n

    def rows(self, i):
        """Node ``i``'s table as a ``(k**deg, k)`` matrix in parent-code order."""
        return self.cpt[i].reshape(-1, self.alphabet_size)

    def parent_codes(self, X, i):
        ps = self.dag.parents[i]
        if not ps:
            return np.zeros(len(X), dtype=np.int64)
        return np.ravel_multi_index(tuple(X[:, p] for p in ps), (self.alphabet_size,) * len(ps))

    def check_points(self, X):
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n:
            raise ParameterError(f"assignments must have length {self.n}")
        if not np.issubdtype(X.dtype, np.integer):
            if not np.all(X == np.round(X)):
                raise ParameterError("assignments must be integer symbols")
            X = X.astype(np.int64)
        if np.any((X < 0) | (X >= self.alphabet_size)):
            raise ParameterError(f"symbol outside alphabet of size {self.alphabet_size}")
        return X

    def log_prob(self, X):
        X = self.check_points(X)
        total = np.zeros(len(X))
        with np.errstate(divide="ignore"):
            for i in range(self.n):
                total += np.log(self.rows(i)[self.parent_codes(X, i), X[:, i]])
        return total

    def sample(self, rng, size):
        rng = as_generator(rng)
        X = np.zeros((size, self.n), dtype=np.int64)
        for i in self.dag.topo_order:
            cdf = np.cumsum(self.rows(i)[self.parent_codes(X, i)], axis=1)
            u = rng.random(size)[:, None]
            X[:, i] = np.minimum((u >= cdf).sum(axis=1), self.alphabet_size - 1)
        return X

    def joint_tensor(self, limit_bits=JOINT_LIMIT_BITS):
        _guard.check(self.n, self.alphabet_size, limit_bits, "joint enumeration")
        k, n = self.alphabet_size, self.n
        joint = np.ones((k,) * n)
        for i in range(n):
            axes = list(self.dag.parents[i]) + [i]
            order = np.argsort(axes)
            table = np.transpose(self.cpt[i], order)
            shape = [1] * n
            for ax in axes:
                shape[ax] = k
            joint = joint * table.reshape(shape)
        return joint

    def joint(self, limit_bits=JOINT_LIMIT_BITS):
        tensor = self.joint_tensor(limit_bits)
        support = [tuple(int(v) for v in idx) for idx in np.ndindex(tensor.shape)]
        return DiscreteDistribution(support, tensor.ravel(), normalize=True)

    def evaluator(self, beta=0.0):
        return EvalApproximator(lambda x: bn_prob(self, x), beta=beta, log_batch=self.log_prob)

    def sampler(self):
        return Sampler(lambda rng: bn_sample(self, rng), f"ancestral sampling from {self!r}",
                       batch=self.sample)


def bn_prob(bn, x):
    """Probability of the full assignment ``x`` via the DAG factorization."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ParameterError("bn_prob takes a single assignment")
    return float(np.exp(bn.log_prob(x)[0]))


def bn_sample(bn, rng):
    return tuple(int(v) for v in bn.sample(rng, 1)[0])


def random_bn(n, d, alphabet_size, rng, dag=None):
    """A random net: each node picks up to ``d`` earlier parents, rows ~ Dirichlet(1)."""
    rng = as_generator(rng)
    if dag is None:
        parents = []
        for i in range(n):
            deg = min(d, i)
            parents.append(tuple(sorted(rng.choice(i, size=deg, replace=False).tolist())) if deg else ())
        dag = Dag(tuple(parents))
    k = alphabet_size
    cpt = [rng.dirichlet(np.ones(k), size=k ** len(ps)) for ps in dag.parents]
    return BayesNet(dag, k, cpt, normalize=True)


def parent_events(bn, i, limit_bits=JOINT_LIMIT_BITS):
    """Exact ``P[parents(i) = a]`` for every ``a`` as :class:`ParentEvent` records."""
    probs = _parent_event_probs(bn, bn.joint_tensor(limit_bits), i)
    deg = len(bn.dag.parents[i])
    shape = (bn.alphabet_size,) * deg
    return [ParentEvent(i, tuple(int(v) for v in np.unravel_index(c, shape)) if deg else (), float(p))
            for c, p in enumerate(probs)]


def _parent_event_probs(bn, joint, i):
    ps = bn.dag.parents[i]
    if not ps:
        return np.array([joint.sum()])
    others = tuple(ax for ax in range(bn.n) if ax not in ps)
    marg = joint.sum(axis=others)
    # marg axes are in sorted parent order; reorder to the CPT's parent order
    marg = np.transpose(marg, np.argsort(np.argsort(ps)))
    return marg.ravel()


def default_threshold(n, d, alphabet_size=2):
    """``ceil(12 ln(n k^d))``, at least 1."""
    return max(1, math.ceil(12.0 * math.log(max(n * alphabet_size ** d, 1)) - 1e-9))


def default_sample_count(n, d, epsilon):
    """``ceil(24 n 2^d ln(n 2^d) / epsilon)`` for binary nets."""
    s = n * 2 ** d
    return math.ceil(24.0 * s * math.log(s) / epsilon - 1e-9)


def learn_bn(samples, dag, alphabet_size, m=None, t=1, *, encoding="direct"):
    """Fixed-structure learner with Laplace-corrected rows and a count threshold.

    A row whose parent assignment was seen at least ``t`` times gets the
    Laplace estimate of the node's symbols among those samples; every other
    row is uniform over the alphabet.

    :param m: expected number of samples; checked against ``len(samples)``.
    :param encoding: ``"direct"`` learns over the alphabet itself,
        ``"binary"`` learns the bit-encoded net and decodes it.
    """
    k = int(alphabet_size)
    X = np.asarray(samples, dtype=np.int64)
    if X.size == 0:
        X = X.reshape(0, dag.n)
    if X.ndim != 2 or X.shape[1] != dag.n:
        raise ParameterError(f"samples of shape {X.shape} do not match a dag with {dag.n} nodes")
    if m is not None and m != len(X):
        raise ParameterError(f"m={m} but {len(X)} samples were given")
    if t < 1:
        raise ParameterError("threshold t must be at least 1")
    if np.any((X < 0) | (X >= k)):
        raise ParameterError(f"symbol outside alphabet of size {k}")
    if encoding == "binary":
        return _learn_via_bits(X, dag, k, t)
    if encoding != "direct":
        raise ParameterError(f"unknown encoding {encoding!r}")

    shell = BayesNet(dag, k, [np.full((k ** len(ps), k), 1.0 / k) for ps in dag.parents])
    cpt = []
    for i in range(dag.n):
        n_rows = k ** len(dag.parents[i])
        codes = shell.parent_codes(X, i)
        counts = np.bincount(codes * k + X[:, i], minlength=n_rows * k).reshape(n_rows, k)
        rows = np.full((n_rows, k), 1.0 / k)
        for a in np.flatnonzero(counts.sum(axis=1) >= t):
            rows[a] = laplace_estimate(counts[a]).mass
        cpt.append(rows)
    return BayesNet(dag, k, cpt)


def kl_between_bns(p, q, *, rng=None, mc_samples=100_000, limit_bits=KL_EXACT_LIMIT_BITS,
                   details=False):
    """``KL(P, Q)`` as the parent-event weighted sum of row divergences.

    Parent-event probabilities are exact below the enumeration limit and
    Monte Carlo estimates (with a standard error) above it.
    """
    if p.dag != q.dag or p.alphabet_size != q.alphabet_size:
        raise ParameterError("KL decomposition needs a common DAG and alphabet")
    exact = _guard.assignment_bits(p.n, p.alphabet_size) <= _guard.enumeration_limit(limit_bits)
    if exact:
        joint = p.joint_tensor(limit_bits=limit_bits)
        weights = [_parent_event_probs(p, joint, i) for i in range(p.n)]
    else:
        X = p.sample(as_generator(rng), mc_samples)
        weights = [np.bincount(p.parent_codes(X, i), minlength=p.rows(i).shape[0]) / mc_samples
                   for i in range(p.n)]
    total, var = 0.0, 0.0
    for i in range(p.n):
        p_rows, q_rows = p.rows(i), q.rows(i)
        row_kl = np.zeros(len(p_rows))
        for a in range(len(p_rows)):
            if weights[i][a] > 0:
                row_kl[a] = exact_kl(DiscreteDistribution(range(p.alphabet_size), p_rows[a]),
                                     DiscreteDistribution(range(q.alphabet_size), q_rows[a]))
        with np.errstate(invalid="ignore"):
            contrib = np.where(weights[i] > 0, weights[i] * row_kl, 0.0)
        total += math.fsum(contrib)
        if not exact and math.isfinite(total):
            # multinomial variance of sum_a w_a * kl_a
            mean = np.dot(weights[i], row_kl)
            var += (np.dot(weights[i], row_kl ** 2) - mean ** 2) / mc_samples
    if details:
        return total, (0.0 if exact else math.sqrt(max(var, 0.0)))
    return total


def bn_learning_m(n, d, alphabet_size, epsilon):
    """Per-repetition sample count after the binary reduction.

    With ``b = ceil(log2 k)``, ``n' = n b``, ``d' = (d + 1) b`` and the KL
    target ``epsilon^2 / 72``, returns ``ceil(24 n' 2^d' ln(n' 2^d') / eps_kl)``.
    """
    if n < 1 or d < 0 or alphabet_size < 2 or not 0 < epsilon < 1:
        raise ParameterError("invalid learning-budget parameters")
    bits = math.ceil(math.log2(alphabet_size))
    n_bits, d_bits = n * bits, (d + 1) * bits
    eps_kl = epsilon ** 2 / 72.0
    s = n_bits * 2 ** d_bits
    return math.ceil(24.0 * s * math.log(s) / eps_kl - 1e-9)


def bn_recommended_m(n, d, alphabet_size, epsilon, delta):
    """Total samples to learn within TV ``epsilon`` w.p. ``1 - delta``."""
    return bn_learning_m(n, d, alphabet_size, epsilon) * median_repetitions(delta)


def estimate_tv_bns(samples_P, samples_Q, dag_P, dag_Q, alphabet_size, epsilon, delta, rng=None,
                    *, threshold=None):
    """Estimate ``d_TV(P, Q)`` from samples of two nets on known (possibly different) DAGs.

    Both nets are learned; their exact evaluators act as
    ``(epsilon/4, 0)``-approximators.  A held-out slice of ``samples_P``,
    disjoint from the learning data, feeds the Monte Carlo step at accuracy
    ``epsilon/4``.
    """
    rng = as_generator(rng)
    XP = np.asarray(samples_P, dtype=np.int64)
    XQ = np.asarray(samples_Q, dtype=np.int64)
    if XP.ndim != 2 or XQ.ndim != 2 or XP.shape[1] != XQ.shape[1]:
        raise ParameterError("sample sets must be 2-D arrays over the same variables")
    t_mc = required_samples(epsilon / 4, delta)
    if len(XP) <= t_mc:
        raise ParameterError(f"need more than {t_mc} samples from P (Monte Carlo hold-out), got {len(XP)}")
    XP = XP[rng.permutation(len(XP))]
    learn_part, holdout = XP[:-t_mc], XP[-t_mc:]
    k = int(alphabet_size)

    def fit(X, dag):
        t = threshold if threshold is not None else default_threshold(dag.n, dag.in_degree, k)
        return learn_bn(X, dag, k, t=t)

    p_hat, q_hat = fit(learn_part, dag_P), fit(XQ, dag_Q)
    est = estimate_tv(Sampler.from_pool(holdout), p_hat.evaluator(beta=epsilon / 4),
                      q_hat.evaluator(beta=epsilon / 4), epsilon / 4, delta, rng)
    return TvEstimate(est.value, est.epsilon, delta, est.samples_used, est.extra_error,
                      {"target": epsilon, "learned_P": p_hat, "learned_Q": q_hat,
                       "learning_samples": (len(learn_part), len(XQ))})


# -- bit encoding -------------------------------------------------------------

def _bit_width(k):
    return max(1, math.ceil(math.log2(k)))


def encode_samples(X, k):
    """Map each symbol to ``ceil(log2 k)`` bits, most significant first."""
    b = _bit_width(k)
    X = np.asarray(X, dtype=np.int64)
    shifts = np.arange(b - 1, -1, -1)
    return ((X[:, :, None] >> shifts) & 1).reshape(len(X), -1)


def encoded_dag(dag, k):
    """Bit-level DAG: bit j of node i depends on all bits of i's parents and on bits < j of i."""
    b = _bit_width(k)
    parents = []
    for i in range(dag.n):
        parent_bits = [p * b + j for p in dag.parents[i] for j in range(b)]
        for j in range(b):
            parents.append(tuple(parent_bits + [i * b + jj for jj in range(j)]))
    return Dag(tuple(parents))


def encode_bn(bn):
    """The binary net over ``n ceil(log2 k)`` bits whose decoded law equals ``bn``.

    Padding symbols (codes ``>= k``) get zero mass; rows conditioned on a
    zero-probability bit prefix are uniform.
    """
    k, b = bn.alphabet_size, _bit_width(bn.alphabet_size)
    dag2 = encoded_dag(bn.dag, k)
    padded = 2 ** b
    cpt = []
    for i in range(bn.n):
        deg = len(bn.dag.parents[i])
        for j in range(b):
            n_parent_bits = deg * b + j
            rows = np.full((2 ** n_parent_bits, 2), 0.5)
            for code in range(2 ** n_parent_bits):
                bits = [(code >> (n_parent_bits - 1 - s)) & 1 for s in range(n_parent_bits)]
                parent_syms = [int("".join(map(str, bits[q * b:(q + 1) * b])), 2) for q in range(deg)]
                if any(s >= k for s in parent_syms):
                    continue
                prefix = bits[deg * b:]
                row = bn.rows(i)[np.ravel_multi_index(parent_syms, (k,) * deg) if deg else 0]
                mass = np.zeros(2)
                for sym in range(min(k, padded)):
                    sym_bits = [(sym >> (b - 1 - s)) & 1 for s in range(b)]
                    if sym_bits[:j] == prefix:
                        mass[sym_bits[j]] += row[sym]
                if mass.sum() > 0:
                    rows[code] = mass / mass.sum()
            cpt.append(rows)
    return BayesNet(dag2, 2, cpt)


def decode_bn(bn_bits, dag, k):
    """Collapse a learned bit-level net back to alphabet ``k``.

    Mass the bit net places on padding codes is removed and each row
    renormalized over the ``k`` real symbols.
    """
    b = _bit_width(k)
    cpt = []
    for i in range(dag.n):
        deg = len(dag.parents[i])
        rows = np.zeros((k ** deg, k))
        for a in range(k ** deg):
            parent_syms = np.unravel_index(a, (k,) * deg) if deg else ()
            parent_bits = [(int(s) >> (b - 1 - r)) & 1 for s in parent_syms for r in range(b)]
            for sym in range(k):
                sym_bits = [(sym >> (b - 1 - r)) & 1 for r in range(b)]
                p = 1.0
                for j in range(b):
                    code = 0
                    for bit in parent_bits + sym_bits[:j]:
                        code = (code << 1) | bit
                    p *= bn_bits.rows(i * b + j)[code, sym_bits[j]]
                rows[a, sym] = p
        cpt.append(rows / rows.sum(axis=1, keepdims=True))
    return BayesNet(dag, k, cpt)


def _learn_via_bits(X, dag, k, t):
    encoded = encode_samples(X, k).reshape(len(X), dag.n * _bit_width(k))
    bits_net = learn_bn(encoded, encoded_dag(dag, k), 2, t=t)
    return decode_bn(bits_net, dag, k)
