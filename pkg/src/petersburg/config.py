"""YAML experiment configuration.

A document is either a single experiment mapping or a mapping with an
``experiments`` list; top-level ``seed`` and ``defaults`` apply to every entry
that does not set them itself::

    seed: 0xC0FFEE
    defaults:
      params: {p: 0.5, s: 2, r: 2}
    experiments:
      - kind: wlln
        n: [256, 65536]
        eps: 0.5
        R: 500

Game parameters go either in a ``params`` section or as top-level ``p``,
``s`` and ``r`` keys of an entry.  Every error names the offending field and
the line it was found on.
"""

import math

import yaml

from .errors import ConfigError, DomainError
from .experiments import KINDS, ExperimentConfig
from .game_model import GameParams

TOP_LEVEL_KEYS = ("experiments", "seed", "defaults")


class _Node(dict):
    """Mapping that remembers the (1-based) line of each key."""

    def __init__(self, line):
        super().__init__()
        self.line = line
        self.lines = {}


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    out = _Node(node.start_mark.line + 1)
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        line = key_node.start_mark.line + 1
        if not isinstance(key, str):
            raise ConfigError(f"keys must be strings, got {key!r}", line=line)
        if key in out:
            raise ConfigError("duplicate key", field=key, line=line)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = line
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _number(value, field, line):
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", field, line)
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        # YAML 1.1 reads 1e-3 (no dot) as a string
        try:
            return int(value, 0)
        except ValueError:
            pass
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"expected a number, got {value!r}", field, line)


def _float(value, field, line):
    out = float(_number(value, field, line))
    if not math.isfinite(out):
        raise ConfigError(f"expected a finite number, got {value!r}", field, line)
    return out


def _int(value, field, line):
    out = _number(value, field, line)
    if isinstance(out, float):
        if not out.is_integer():
            raise ConfigError(f"expected an integer, got {value!r}", field, line)
        out = int(out)
    return out


def _listed(convert):
    def parse(value, field, line):
        items = value if isinstance(value, list) else [value]
        if isinstance(value, dict):
            raise ConfigError("expected a number or a list of numbers", field, line)
        return tuple(convert(v, field, line) for v in items)

    return parse


def _string(value, field, line):
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", field, line)
    return value


def _boolean(value, field, line):
    if not isinstance(value, bool):
        raise ConfigError(f"expected true or false, got {value!r}", field, line)
    return value


def _seed(value, field, line):
    out = _int(value, field, line)
    if out < 0:
        raise ConfigError("seed must be nonnegative", field, line)
    return out


FIELDS = {
    "kind": _string,
    "name": _string,
    "n": _listed(_int),
    "R": _int,
    "u": _float,
    "b": _float,
    "eps": _listed(_float),
    "a": _float,
    "seed": _seed,
    "t_grid": _listed(_float),
    "tol": _float,
    "method": _string,
    "ks": _boolean,
    "sandwich_n_max": _int,
    "mc_n": _listed(_int),
}
PARAM_KEYS = ("p", "s", "r")


def _params(entry, line):
    flat = [k for k in PARAM_KEYS if k in entry]
    if "params" in entry:
        if flat:
            raise ConfigError("give p, s, r either flat or in 'params', not both",
                              field=flat[0], line=entry.lines.get(flat[0], line))
        section = entry["params"]
        sec_line = entry.lines.get("params", line)
        if not isinstance(section, dict):
            raise ConfigError("expected a mapping with p, s, r", "params", sec_line)
        lines = getattr(section, "lines", {})
        for key in section:
            if key not in PARAM_KEYS:
                raise ConfigError("unknown key", f"params.{key}", lines.get(key, sec_line))
        prefix = "params."
    else:
        section, lines, sec_line, prefix = entry, entry.lines, line, ""
    values = {}
    for key in PARAM_KEYS:
        if key not in section:
            raise ConfigError("missing game parameter", prefix + key, sec_line)
        values[key] = _float(section[key], prefix + key, lines.get(key, sec_line))
    try:
        return GameParams(**values)
    except DomainError as err:
        raise ConfigError(str(err), "params", sec_line) from None


def _merge(defaults, entry):
    merged = _Node(entry.line)
    for source in (defaults, entry):
        for key, value in source.items():
            merged[key] = value
            merged.lines[key] = source.lines.get(key, source.line)
    # a flat p/s/r in the entry replaces a default params section and vice versa
    if any(k in entry for k in PARAM_KEYS) and "params" not in entry:
        merged.pop("params", None)
    if "params" in entry:
        for k in PARAM_KEYS:
            if k not in entry:
                merged.pop(k, None)
    return merged


def _entry(entry, default_kind, seed):
    line = entry.line
    for key in entry:
        if key not in FIELDS and key not in PARAM_KEYS and key != "params":
            raise ConfigError("unknown key", key, entry.lines.get(key, line))
    fields = {key: FIELDS[key](entry[key], key, entry.lines[key]) for key in FIELDS if key in entry}
    kind = fields.pop("kind", default_kind)
    if kind is None:
        raise ConfigError("missing experiment kind", "kind", line)
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; choose from {', '.join(KINDS)}",
                          "kind", entry.lines.get("kind", line))
    if default_kind is not None and kind != default_kind:
        raise ConfigError(f"kind {kind!r} does not match the requested {default_kind!r}",
                          "kind", entry.lines.get("kind", line))
    if "n" not in fields:
        raise ConfigError("missing n", "n", line)
    fields.setdefault("seed", seed)
    cfg = ExperimentConfig(kind=kind, params=_params(entry, line), **fields)
    try:
        cfg.validate()
    except DomainError as err:
        field = getattr(err, "field", None)
        where = entry.lines.get(field, entry.lines.get("params", line)) if field else line
        raise ConfigError(str(err), field, where) from None
    return cfg


def parse_config(text, default_kind=None):
    """Validated ExperimentConfig list from a YAML document.

    ``default_kind`` fills in entries without a ``kind`` and rejects entries of
    any other kind.
    """
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as err:
        mark = err.problem_mark or err.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"malformed YAML: {err.problem or err}", line=line) from None
    except yaml.YAMLError as err:
        raise ConfigError(f"malformed YAML: {err}") from None
    if doc is None:
        return []
    if not isinstance(doc, dict):
        raise ConfigError("the document must be a mapping", line=1)
    if "experiments" not in doc and ("kind" in doc or default_kind is not None):
        return [_entry(doc, default_kind, None)]
    for key in doc:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigError("unknown top-level key", key, doc.lines.get(key))
    seed = _seed(doc["seed"], "seed", doc.lines["seed"]) if "seed" in doc else None
    defaults = doc.get("defaults") or _Node(doc.line)
    if not isinstance(defaults, dict):
        raise ConfigError("expected a mapping", "defaults", doc.lines.get("defaults"))
    entries = doc.get("experiments") or []
    if not isinstance(entries, list):
        raise ConfigError("expected a list of experiments", "experiments", doc.lines.get("experiments"))
    configs, labels = [], {}
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError("each experiment must be a mapping", f"experiments[{i}]",
                              doc.lines.get("experiments"))
        cfg = _entry(_merge(defaults, entry), default_kind, seed)
        if cfg.label in labels:
            raise ConfigError(f"experiment name {cfg.label!r} already used on line {labels[cfg.label]}; "
                              "set distinct 'name' fields", "name", entry.lines.get("name", entry.line))
        labels[cfg.label] = entry.line
        configs.append(cfg)
    return configs


def dump_config(configs, seed=None):
    """YAML text that parses back to ``configs``."""
    entries = []
    for cfg in configs:
        d = cfg.as_dict()
        params = d.pop("params")
        d["params"] = {k: params[k] for k in PARAM_KEYS}
        defaults = ExperimentConfig(cfg.kind, cfg.params, cfg.n).as_dict()
        entry = {k: v for k, v in d.items() if k in ("kind", "params", "n", "R") or v != defaults[k]}
        entries.append(entry)
    doc = {"experiments": entries}
    if seed is not None:
        doc["seed"] = int(seed)
    return yaml.safe_dump(doc, sort_keys=False)
