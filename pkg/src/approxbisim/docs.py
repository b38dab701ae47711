"""JSON documents for chains, relations and results.

Chain document::

    {"ap": ["a", "b"],
     "states": [{"name": "s1", "label": ["a"]}, ...],
     "kernel": [[0.5, 0.5], ...]}

Relation document::

    {"eps": 0.25, "pairs": [["s1", "s2"], ...]}

Output is written with sorted keys and two-space indentation, so identical
data always serialises to identical bytes.
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .bisim import Relation
from .lmc import FiniteLmc, LmcError, builtin, validate

BUILTIN_SPEC = re.compile(r"builtin:(?P<name>\w+)(?:\((?P<arg>[^)]*)\))?\Z")


class DocumentError(OSError):
    """File missing, unreadable or not valid JSON."""


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (frozenset, set)):
        return sorted(_plain(v) for v in obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else str(obj)
    return obj


def dumps(doc) -> str:
    return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"


def read_json(path) -> object:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None


def write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DocumentError(f"cannot write {path}: {exc.strerror or exc}") from None


def model_to_doc(model: FiniteLmc) -> dict:
    return {
        "ap": list(model.ap),
        "states": [{"name": s, "label": sorted(l)} for s, l in zip(model.states, model.labels)],
        "kernel": model.kernel.tolist(),
    }


def model_from_doc(doc) -> FiniteLmc:
    """Parse a chain document without validating the kernel (see :func:`load_model`)."""
    if not isinstance(doc, dict):
        raise LmcError("chain document must be an object")
    missing = [k for k in ("states", "kernel") if k not in doc]
    if missing:
        raise LmcError(f"chain document lacks {missing}")
    states = doc["states"]
    if not isinstance(states, list) or not all(isinstance(s, dict) and "name" in s for s in states):
        raise LmcError("'states' must be a list of {name, label} objects")
    try:
        kernel = np.array(doc["kernel"], dtype=float)
    except (TypeError, ValueError):
        raise LmcError("'kernel' must be a list of numeric rows") from None
    labels = [s.get("label", []) for s in states]
    if not all(isinstance(l, list) for l in labels):
        raise LmcError("every label must be a list of proposition names")
    ap = tuple(doc.get("ap") or sorted({a for l in labels for a in l}))
    return FiniteLmc([s["name"] for s in states], labels, kernel, ap, check=False)


def load_model(spec: str, normalize: bool = False) -> FiniteLmc:
    """Load a chain from a document path or ``builtin:NAME(ARG)``.

    The chain is validated; with ``normalize`` rows off by at most ``1e-6``
    are rescaled instead of rejected.
    """
    m = BUILTIN_SPEC.match(spec)
    if m:
        name, arg = m["name"], m["arg"]
        params = {}
        if arg:
            try:
                value = float(arg)
            except ValueError:
                raise LmcError(f"builtin argument must be a number, got {arg!r}") from None
            params = {"eps": value} if name == "tightness" else {"N": int(value)}
        return builtin(name, **params)
    model = model_from_doc(read_json(spec))
    report = validate(model, strict=not normalize)
    if not report.ok:
        raise LmcError(f"{spec}: " + "; ".join(report.issues))
    return report.model


def relation_to_doc(rel: Relation) -> dict:
    return {"eps": rel.eps, "pairs": [list(p) for p in rel.named_pairs()]}


def relation_from_doc(doc, model: FiniteLmc) -> Relation:
    if not isinstance(doc, dict) or "pairs" not in doc:
        raise LmcError("relation document must be an object with 'pairs'")
    pairs = doc["pairs"]
    if not all(isinstance(p, list) and len(p) == 2 for p in pairs):
        raise LmcError("'pairs' must be a list of [state, state] entries")
    return Relation.from_pairs(model, [tuple(p) for p in pairs], float(doc.get("eps", 0.0)))
