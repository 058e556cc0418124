"""JSON and CSV formats for patterns, density models, samples and results.

JSON floats are written with Python's shortest round-trip repr and CSV
floats with 17 significant digits, so reading back what was written
reproduces every value exactly.
"""

import csv
import io as _io
import json
from pathlib import Path

import jsonschema
import numpy as np

from .density import AngleHistogram, CylinderHistogram, DensityModel, LinearTrend, UniformDirections
from .errors import ConfigError, DataFormatError
from .fibers import CubicCurve, Fiber, Polyline, SampleSet, Segment
from .geometry import OrientationConvention, Window
from .simulate import DependentModelSpec, FiberPattern, NullModelSpec

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 3}
_POLE = {"anyOf": [{"type": "null"}, _VEC]}
_EXTENTS = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 3}

PATTERN_SCHEMA = {
    "type": "object",
    "required": ["dim", "oriented", "window", "fibers"],
    "properties": {
        "dim": {"enum": [2, 3]},
        "oriented": {"type": "boolean"},
        "pole": _POLE,
        "window": _EXTENTS,
        "fibers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "kind", "payload"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "kind": {"enum": ["segment", "polyline", "cubic"]},
                    "payload": {"type": "object"},
                },
            },
        },
    },
}

CONVENTION_SCHEMA = {
    "type": "object",
    "required": ["oriented"],
    "properties": {"oriented": {"type": "boolean"}, "pole": _POLE},
}

_ARR = {"type": "array", "items": _NUM, "minItems": 1}

DENSITY_SCHEMA = {
    "type": "object",
    "required": ["beta", "eta", "convention"],
    "properties": {
        "beta": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 4},
        "convention": CONVENTION_SCHEMA,
        "eta": {
            "type": "object",
            "required": ["variant"],
            "properties": {"variant": {"enum": ["uniform", "histogram2d", "histogram_cyl3d"]}},
        },
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["model", "window", "beta"],
    "properties": {
        "model": {"enum": ["null", "dependent"]},
        "window": _EXTENTS,
        "beta": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 4},
        "max_length": {"type": "number", "exclusiveMinimum": 0},
        "mean_length": {"type": "number", "exclusiveMinimum": 0},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "correlation_scale": {"type": "number", "exclusiveMinimum": 0},
        "oriented": {"type": "boolean"},
        "pole": _POLE,
        "seed": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}


def _validate(doc, schema, error_cls, what):
    errors = sorted(jsonschema.Draft7Validator(schema).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise error_cls(f"{what}: field '{where}': {err.message}")


def _load_json(path, error_cls, what):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise error_cls(f"{what}: not valid JSON ({exc})") from None


def _dump_json(doc, path):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _floats(a):
    return [float(x) for x in np.ravel(a)]


# -- conventions -------------------------------------------------------------------


def convention_to_dict(conv: OrientationConvention):
    return {"oriented": conv.oriented, "pole": None if conv.pole is None else list(conv.pole)}


def convention_from_dict(doc):
    pole = doc.get("pole")
    return OrientationConvention(bool(doc["oriented"]), None if pole is None else tuple(pole))


# -- patterns --------------------------------------------------------------------


def fiber_to_dict(fiber: Fiber):
    g = fiber.geometry
    if isinstance(g, Segment):
        kind, payload = "segment", {"midpoint": _floats(g.midpoint), "direction": _floats(g.direction), "length": g.length}
    elif isinstance(g, Polyline):
        kind, payload = "polyline", {"vertices": [_floats(v) for v in g.vertices]}
    else:
        kind, payload = "cubic", {"coef": [_floats(row) for row in g.coef]}
    return {"id": fiber.id, "kind": kind, "payload": payload}


def fiber_from_dict(doc):
    p = doc["payload"]
    try:
        if doc["kind"] == "segment":
            geom = Segment(np.array(p["midpoint"], float), np.array(p["direction"], float), p["length"])
        elif doc["kind"] == "polyline":
            geom = Polyline(np.array(p["vertices"], float))
        else:
            geom = CubicCurve(np.array(p["coef"], float))
    except KeyError as exc:
        raise DataFormatError(f"fiber {doc['id']}: payload is missing field {exc}") from None
    return Fiber(doc["id"], geom)


def pattern_to_dict(pattern: FiberPattern):
    conv = convention_to_dict(pattern.conv)
    return {
        "dim": pattern.dim,
        "oriented": conv["oriented"],
        "pole": conv["pole"],
        "window": list(pattern.window.extents),
        "fibers": [fiber_to_dict(f) for f in pattern.fibers],
    }


def pattern_from_dict(doc) -> FiberPattern:
    _validate(doc, PATTERN_SCHEMA, DataFormatError, "pattern")
    ids = [f["id"] for f in doc["fibers"]]
    if len(set(ids)) != len(ids):
        raise DataFormatError("pattern: field 'fibers': fiber ids must be unique")
    if len(doc["window"]) != doc["dim"]:
        raise DataFormatError("pattern: field 'window': length must equal dim")
    conv = convention_from_dict(doc)
    try:
        return FiberPattern(Window(tuple(doc["window"])), conv, [fiber_from_dict(f) for f in doc["fibers"]])
    except ValueError as exc:
        raise DataFormatError(f"pattern: {exc}") from None


def write_pattern(path, pattern: FiberPattern):
    _dump_json(pattern_to_dict(pattern), path)


def read_pattern(path) -> FiberPattern:
    return pattern_from_dict(_load_json(path, DataFormatError, "pattern"))


# -- density models -------------------------------------------------------------------


def density_to_dict(model: DensityModel):
    eta = model.eta
    if isinstance(eta, AngleHistogram):
        eta_doc = {"variant": eta.variant, "edges": _floats(eta.edges), "masses": _floats(eta.masses)}
    elif isinstance(eta, CylinderHistogram):
        eta_doc = {
            "variant": eta.variant,
            "height_edges": _floats(eta.height_edges),
            "height_masses": _floats(eta.height_masses),
            "angle_edges": _floats(eta.angle_edges),
            "angle_masses": _floats(eta.angle_masses),
        }
    else:
        eta_doc = {"variant": "uniform"}
    return {"beta": list(model.trend.beta), "eta": eta_doc, "convention": convention_to_dict(model.conv)}


def density_from_dict(doc) -> DensityModel:
    _validate(doc, DENSITY_SCHEMA, DataFormatError, "density")
    conv = convention_from_dict(doc["convention"])
    e = doc["eta"]
    try:
        if e["variant"] == "uniform":
            eta = UniformDirections()
        elif e["variant"] == "histogram2d":
            eta = AngleHistogram(e["edges"], e["masses"], conv.oriented)
        else:
            eta = CylinderHistogram(e["height_edges"], e["height_masses"], e["angle_edges"], e["angle_masses"], conv.oriented)
        return DensityModel(LinearTrend(doc["beta"]), eta, conv)
    except KeyError as exc:
        raise DataFormatError(f"density: field 'eta': missing {exc}") from None
    except ValueError as exc:
        raise DataFormatError(f"density: {exc}") from None


def write_density(path, model: DensityModel, diagnostics=None):
    doc = density_to_dict(model)
    if diagnostics is not None:
        doc["diagnostics"] = diagnostics
    _dump_json(doc, path)


def read_density(path) -> DensityModel:
    return density_from_dict(_load_json(path, DataFormatError, "density"))


# -- simulation configs ------------------------------------------------------------------


def spec_from_config(doc, seed=None):
    """Build a :class:`NullModelSpec` or :class:`DependentModelSpec` from a
    config document; ``seed`` overrides the config's own."""
    _validate(doc, CONFIG_SCHEMA, ConfigError, "config")
    d = len(doc["window"])
    if len(doc["beta"]) != d + 1:
        raise ConfigError(f"config: field 'beta': needs {d + 1} entries for a {d}-d window")
    if doc.get("pole") is not None and len(doc["pole"]) != d:
        raise ConfigError(f"config: field 'pole': needs {d} entries")
    conv = OrientationConvention(doc.get("oriented", False), None if doc.get("pole") is None else tuple(doc["pole"]))
    seed = doc.get("seed", 0) if seed is None else seed
    window = Window(tuple(doc["window"]))
    try:
        if doc["model"] == "null":
            for key in ("mean_length", "sigma", "correlation_scale"):
                if key in doc:
                    raise ConfigError(f"config: field '{key}': not used by the null model")
            return NullModelSpec(window, tuple(doc["beta"]), doc.get("max_length", 2.0), conv, seed)
        if "max_length" in doc:
            raise ConfigError("config: field 'max_length': not used by the dependent model")
        return DependentModelSpec(
            window, tuple(doc["beta"]), doc.get("correlation_scale", 2.0), doc.get("sigma"),
            doc.get("mean_length", 1.0), conv, seed,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from None


def read_config(path, seed=None):
    return spec_from_config(_load_json(path, ConfigError, "config"), seed)


# -- CSV ---------------------------------------------------------------------------


def _fmt(x):
    return format(float(x), ".17g")


def _write_rows(path, header, rows):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def sample_header(dim):
    axes = "xyz"[:dim]
    return ["fiber_id"] + list(axes) + ["t" + a for a in axes] + ["weight"]


def write_samples_csv(path, samples: SampleSet):
    rows = (
        [str(int(f))] + [_fmt(v) for v in x] + [_fmt(v) for v in t] + [_fmt(w)]
        for f, x, t, w in zip(samples.fiber_ids, samples.locations, samples.tangents, samples.weights)
    )
    _write_rows(path, sample_header(samples.dim), rows)


def read_samples_csv(path) -> SampleSet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header not in (sample_header(2), sample_header(3)):
            raise DataFormatError(f"samples: unexpected header {header}")
        dim = 2 if header == sample_header(2) else 3
        rows = list(reader)
    if any(len(r) != len(header) for r in rows):
        raise DataFormatError("samples: rows must have as many columns as the header")
    if not rows:
        return SampleSet.empty(dim)
    try:
        ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
        vals = np.array([[float(v) for v in r[1:]] for r in rows])
    except ValueError as exc:
        raise DataFormatError(f"samples: {exc}") from None
    tangents = vals[:, dim: 2 * dim]
    if np.any(np.abs(np.linalg.norm(tangents, axis=1) - 1.0) > 1e-6):
        raise DataFormatError("samples: tangents must be unit vectors")
    try:
        return SampleSet(vals[:, :dim], tangents, ids, vals[:, -1])
    except ValueError as exc:
        raise DataFormatError(f"samples: {exc}") from None


def write_k_csv(path, est):
    _write_rows(path, ["r1", "r2", "k_hat", "k0", "k_rel"], ([_fmt(v) for v in row] for row in est.rows()))


def write_envelope_csv(path, env):
    _write_rows(path, ["r1", "r2", "lo", "hi", "data"], ([_fmt(v) for v in row] for row in env.rows()))


def read_table_csv(path):
    """Header and float matrix of a numeric CSV written by this module."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader]).reshape(-1, len(header))
    return header, data


def write_json(path, doc):
    _dump_json(doc, path)


def write_table(path, header, rows):
    """Numeric CSV with the same formatting as every other table here."""
    _write_rows(path, header, ([_fmt(v) for v in row] for row in rows))
