"""JSON model files and newline-delimited sample files.

Every writer is deterministic: the same object always serializes to the
same bytes, and ``load -> dump`` is idempotent.
"""

import json
from pathlib import Path

import numpy as np

from .bayesnet import BayesNet, Dag
from .causal import Cbn, Hidden
from .errors import FamilyMismatchError, ParameterError
from .gaussian import GaussianParams
from .ising import IsingModel

FAMILIES = ("bayesnet", "ising", "gaussian", "causal")


def family_of(obj):
    """Family of a model object or of a parsed JSON document."""
    if isinstance(obj, BayesNet):
        return "bayesnet"
    if isinstance(obj, IsingModel):
        return "ising"
    if isinstance(obj, GaussianParams):
        return "gaussian"
    if isinstance(obj, Cbn):
        return "causal"
    if isinstance(obj, dict):
        if "mu" in obj:
            return "gaussian"
        if "A" in obj:
            return "ising"
        if "v" in obj:
            return "causal"
        if "parents" in obj:
            return "bayesnet"
    raise ParameterError("unrecognized model document")


def _rows(table):
    k = table.shape[-1]
    flat = table.reshape(-1, k)
    shape = table.shape[:-1]
    return [{"a": [int(i) for i in np.unravel_index(c, shape)] if shape else [], "row": flat[c].tolist()}
            for c in range(len(flat))]


def _table(rows, shape, k, what):
    out = np.full(tuple(shape) + (k,), np.nan)
    for r in rows:
        a = tuple(r["a"])
        if len(a) != len(shape) or len(r["row"]) != k:
            raise ParameterError(f"malformed CPT row for {what}: {r}")
        out[a] = r["row"]
    if np.isnan(out).any():
        raise ParameterError(f"CPT for {what} does not cover every parent assignment")
    return out


def to_json(model):
    fam = family_of(model)
    if fam == "bayesnet":
        return {"n": model.n, "alphabet": model.alphabet_size,
                "parents": [list(p) for p in model.dag.parents],
                "cpt": [_rows(t) for t in model.cpt]}
    if fam == "ising":
        theta = model.theta if np.ndim(model.theta) == 0 else list(model.theta)
        return {"n": model.n, "A": model.A.tolist(), "theta": theta}
    if fam == "gaussian":
        return {"mu": model.mu.tolist(), "sigma": model.sigma.tolist()}
    # causal: observable parents first (in the order listed under "directed"), then hidden ones
    hidden = list(model.hidden)
    directed, cpt = [], {}
    for x in model.v:
        obs = [p for p in model.parents[x] if p in model.parents]
        hid = [h.name for h in hidden if h.name in model.parents[x]]
        directed += [[p, x] for p in obs]
        order = [model.parents[x].index(p) for p in obs + hid]
        cpt[x] = _rows(np.transpose(model.cpt[x], order + [len(order)]))
    return {"v": list(model.v), "alphabet": model.k,
            "u": [{"name": h.name, "children": list(h.children), "dist": h.dist.tolist()} for h in hidden],
            "directed": directed, "cpt": cpt}


def from_json(doc, family=None):
    fam = family_of(doc)
    if family is not None and family != fam:
        raise FamilyMismatchError(f"expected a {family} model, got {fam}")
    try:
        if fam == "bayesnet":
            k = int(doc["alphabet"])
            dag = Dag(tuple(tuple(p) for p in doc["parents"]))
            if dag.n != int(doc["n"]):
                raise ParameterError("n disagrees with the parents list")
            cpt = [_table(rows, (k,) * len(dag.parents[i]), k, f"node {i}") for i, rows in enumerate(doc["cpt"])]
            return BayesNet(dag, k, cpt)
        if fam == "ising":
            m = IsingModel(doc["A"], doc.get("theta", 0.0))
            if "n" in doc and int(doc["n"]) != m.n:
                raise ParameterError("n disagrees with the interaction matrix")
            return m
        if fam == "gaussian":
            return GaussianParams(doc["mu"], doc["sigma"])
        k = int(doc.get("alphabet", 2))
        v = list(doc["v"])
        hidden = [Hidden(h.get("name", f"U{j}"), tuple(h["children"]), h["dist"]) for j, h in enumerate(doc["u"])]
        parents = {x: tuple(a for a, b in doc["directed"] if b == x)
                   + tuple(h.name for h in hidden if x in h.children) for x in v}
        card = {x: k for x in v} | {h.name: len(h.dist) for h in hidden}
        cpt = {x: _table(doc["cpt"][x], [card[p] for p in parents[x]], k, x) for x in v}
        return Cbn(v, parents, cpt, hidden, k)
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"malformed {fam} model: missing or invalid {exc}") from None


def dumps(model):
    return json.dumps(to_json(model), indent=2) + "\n"


def load_model(path, family=None):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParameterError(f"cannot read model {path}: {exc}") from None
    return from_json(doc, family)


def write_model(model, path):
    Path(path).write_text(dumps(model))


def format_samples(X):
    X = np.asarray(X)
    if np.issubdtype(X.dtype, np.integer):
        return "".join(" ".join(str(int(v)) for v in row) + "\n" for row in X)
    return "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in X)


def parse_samples(text, real=False):
    rows = [line.split() for line in text.splitlines() if line.strip()]
    if not rows:
        raise ParameterError("sample file is empty")
    if len({len(r) for r in rows}) != 1:
        raise ParameterError("sample rows have different lengths")
    try:
        return np.array(rows, dtype=np.float64 if real else np.int64)
    except ValueError:
        raise ParameterError("sample file contains non-numeric entries") from None


def read_samples(path, real=False):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParameterError(f"cannot read samples {path}: {exc}") from None
    return parse_samples(text, real)
