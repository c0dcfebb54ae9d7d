"""Model pairs with known exact distances, shared by unit and acceptance tests."""

import numpy as np
from scipy.optimize import brentq

from tvest.bayesnet import BayesNet, Dag
from tvest.causal import Admg, Cbn, Hidden, Intervention
from tvest.core import exact_tv
from tvest.ising import IsingModel, random_ising
from tvest.rng import stream


def bn_pair(target=0.31):
    """Chain P vs star Q on 4 binary nodes with exact TV tuned to ``target``."""
    p = BayesNet(Dag.chain(4), 2, [[0.6, 0.4], [[0.8, 0.2], [0.3, 0.7]],
                                    [[0.7, 0.3], [0.25, 0.75]], [[0.9, 0.1], [0.4, 0.6]]])

    def q_of(s):
        return BayesNet(Dag.star(4), 2, [[0.6, 0.4], [[0.8 - s, 0.2 + s], [0.3, 0.7]],
                                          [[0.7, 0.3], [0.25 + s, 0.75 - s]],
                                          [[0.9 - s, 0.1 + s], [0.4, 0.6]]])

    s = brentq(lambda s: exact_tv(p.joint(), q_of(s).joint()) - target, 0.0, 0.6)
    return p, q_of(s)


def ising_pair(target=0.27, n=8, width=0.8):
    """Two ferromagnetic models on ``n`` spins: P field-free, Q the same couplings
    scaled by 0.8 plus a field tuned so the exact TV equals ``target``."""
    p = random_ising(n, width, stream(3, "ising-pair"))
    pj = p.joint()

    def q_of(t):
        return IsingModel(0.8 * np.asarray(p.A), t)

    t = brentq(lambda t: exact_tv(pj, q_of(t).joint()) - target, 0.0, 1.0)
    return p, q_of(t)


def five_node_admg():
    """Five observables with in-degree 2 whose c-components are {A,C} and {B,D,E}."""
    return Admg(("A", "B", "C", "D", "E"),
                directed=(("A", "B"), ("B", "C"), ("A", "D"), ("C", "E"), ("D", "E")),
                bidirected=(("A", "C"), ("B", "D"), ("D", "E")))


def causal_pair(target=0.4):
    """Identifiable CBNs over A -> B -> C, A -> D with a hidden confounder of
    (C, D); the two differ only in B's row for A=1, which sets TV under do(A=1)."""
    base = {"A": [0.5, 0.5], "C": [[[0.9, 0.1], [0.4, 0.6]], [[0.2, 0.8], [0.6, 0.4]]],
            "D": [[[0.7, 0.3], [0.1, 0.9]], [[0.5, 0.5], [0.3, 0.7]]]}
    parents = {"B": ("A",), "C": ("B", "U"), "D": ("A", "U")}
    hidden = [Hidden("U", ("C", "D"), [0.35, 0.65])]
    p = Cbn("ABCD", parents, base | {"B": [[0.6, 0.4], [0.7, 0.3]]}, hidden)
    q = Cbn("ABCD", parents, base | {"B": [[0.6, 0.4], [0.7 - target, 0.3 + target]]}, hidden)
    return p, q, Intervention("A", 1)


def confounded_instance():
    """A -> B with a hidden common cause of A and B."""
    hidden = [Hidden("U", ("A", "B"), [0.5, 0.5])]
    cpt = {"A": [[0.9, 0.1], [0.2, 0.8]],
           "B": [[[0.8, 0.2], [0.6, 0.4]], [[0.3, 0.7], [0.1, 0.9]]]}
    return Cbn("AB", {"A": ("U",), "B": ("A", "U")}, cpt, hidden)
