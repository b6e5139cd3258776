"""Model files: versioned JSON with 17-significant-digit numbers, plus atomic writes."""

import hashlib
import json
import math
import os
import tempfile

import numpy as np

from .exceptions import ValidationError
from .knotsel1d import FittedSplineModel
from .splinekit import build_augmented_knots
from .tensorfit import FittedTensorModel

SCHEMA = "glober-model"
SCHEMA_VERSION = 1


def format_float(x):
    """17 significant digits; enough to round-trip every double exactly."""
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError(f"cannot serialize non-finite value {x}")
    return f"{x:.17g}"


def dumps(obj, indent=2, _level=0):
    """
    JSON text for dicts, lists, strings, ints, floats, bools and None.

    Floats are written with :func:`format_float`, and short numeric lists
    stay on one line.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
               for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def config_hash(config):
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _knot_entry(kv):
    return {
        "bounds": [kv.lower, kv.upper],
        "interior_knots": [float(t) for t in kv.interior],
        "augmented_knots": [float(t) for t in kv.augmented],
    }


def model_to_dict(model, config=None, extra=None):
    """Serializable form of a 1D or tensor model."""
    config = config or {}
    if isinstance(model, FittedSplineModel):
        knots = (model.knots,)
        gamma = np.asarray(model.gamma)
        selection = {"lambda": model.lam, "grid_index": model.index}
        rank = model.rank_deficient
    elif isinstance(model, FittedTensorModel):
        knots = model.knots
        gamma = np.asarray(model.gamma)
        selection = {
            "entries": None if model.selected is None else [int(k) for k in model.selected],
            "lambdas": [[float(v) for v in np.atleast_1d(lam)] for lam in model.lambdas],
        }
        rank = model.rank_deficient
    else:
        raise ValidationError(f"unsupported model type {type(model).__name__}")
    provenance = {
        "selection": selection,
        "ebic": float(model.ebic),
        "ss": float(model.ss),
        "n_obs": int(model.n_obs),
        "rank_deficient": bool(rank),
        "config": config,
        "config_hash": config_hash(config),
    }
    if isinstance(model, FittedTensorModel) and model.log:
        provenance["log"] = list(model.log)
    provenance.update(extra or {})
    return {
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "dims": len(knots),
        "degree": int(model.q),
        "order": int(model.q) + 1,
        "knots": [_knot_entry(kv) for kv in knots],
        "coefficients": {
            "shape": list(gamma.shape),
            "values": [float(v) for v in gamma.ravel(order="C")],
        },
        "provenance": provenance,
    }


def model_from_dict(data):
    """Rebuild the model object saved by :func:`model_to_dict`."""
    if data.get("schema") != SCHEMA:
        raise ValidationError("not a model file")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported model schema version {version}")
    order = int(data["order"])
    q = int(data["degree"])
    kvs = tuple(build_augmented_knots(k["interior_knots"], order, tuple(k["bounds"]))
                for k in data["knots"])
    coef = data["coefficients"]
    shape = tuple(int(s) for s in coef["shape"])
    gamma = np.array(coef["values"], dtype=float).reshape(shape)
    expected = tuple(kv.n_basis for kv in kvs)
    if shape != expected:
        raise ValidationError(f"coefficient shape {shape} does not match knots {expected}")
    gamma.setflags(write=False)
    prov = data.get("provenance", {})
    sel = prov.get("selection", {})
    if len(kvs) == 1:
        return FittedSplineModel(kvs[0], gamma, q, sel.get("lambda"), prov.get("ebic", math.nan),
                                 prov.get("ss", math.nan), prov.get("n_obs", 0),
                                 prov.get("rank_deficient", False), sel.get("grid_index"))
    entries = sel.get("entries")
    return FittedTensorModel(kvs, gamma, q, prov.get("ebic", math.nan), prov.get("ss", math.nan),
                             prov.get("n_obs", 0), None if entries is None else tuple(entries),
                             tuple(np.array(v) for v in sel.get("lambdas", [])),
                             prov.get("rank_deficient", False), tuple(prov.get("log", ())))


def save_model(model, path, config=None, extra=None):
    atomic_write(path, dumps(model_to_dict(model, config, extra)) + "\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid model file ({exc})") from exc
    return model_from_dict(data)


def predict_points(model, points):
    """Predictions for an ``(n, d)`` array with any supported model."""
    pts = np.asarray(points, dtype=float)
    if isinstance(model, FittedSplineModel):
        return model.predict(pts.reshape(-1))
    return model.predict(pts.reshape(-1, model.dims))


def model_dims(model):
    return 1 if isinstance(model, FittedSplineModel) else model.dims


def model_bounds(model):
    return (model.bounds,) if isinstance(model, FittedSplineModel) else model.bounds


def _umask():
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path, text):
    """Write `text` to a temporary file next to `path`, then rename it into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
