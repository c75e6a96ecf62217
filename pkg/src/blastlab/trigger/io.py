"""JSON encoding of trigger specs.

Formulas are nested arrays::

    ["atom", offset, feature, op, relation, constant]
    ["and", f1, f2, ...]      # n-ary, folded left
    ["or", f1, f2, ...]
    ["ite", cond, then, else]

Actions are action names (``"N"``, ``"S"``, ``"E"``, ``"W"``, ``"stay"``) or null.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from blastlab.env.gridworld import ACTION_NAMES, action_index
from blastlab.errors import ConfigError
from blastlab.trigger.formula import And, Atom, Ite, Or, SpatialConstraint, TriggerSpec, conj, disj

SCHEMA_VERSION = 1
FIXTURES = ("trigger1", "trigger2", "trigger3")


def formula_to_json(f):
    if isinstance(f, Atom):
        c = f.constraint
        return ["atom", c.offset, c.feature, c.op, c.relation, c.constant]
    if isinstance(f, (And, Or)):
        tag = "and" if isinstance(f, And) else "or"
        # flatten left-folded chains of the same connective
        parts = []
        node = f
        while isinstance(node, type(f)):
            parts.append(node.right)
            node = node.left
        parts.append(node)
        return [tag] + [formula_to_json(p) for p in reversed(parts)]
    if isinstance(f, Ite):
        return ["ite", formula_to_json(f.cond), formula_to_json(f.then), formula_to_json(f.other)]
    raise ConfigError(f"not a formula node: {f!r}")


def formula_from_json(doc, path="formula"):
    if not isinstance(doc, list) or not doc:
        raise ConfigError("formula node must be a non-empty array", path)
    tag = doc[0]
    if tag == "atom":
        if len(doc) != 6:
            raise ConfigError("atom needs [\"atom\", offset, feature, op, relation, constant]", path)
        try:
            return Atom(SpatialConstraint(int(doc[1]), doc[2], doc[3], doc[4], float(doc[5])))
        except Exception as exc:
            raise ConfigError(str(exc), path) from exc
    if tag in ("and", "or"):
        if len(doc) < 3:
            raise ConfigError(f"{tag} needs at least two operands", path)
        parts = [formula_from_json(d, f"{path}[{i + 1}]") for i, d in enumerate(doc[1:])]
        return conj(*parts) if tag == "and" else disj(*parts)
    if tag == "ite":
        if len(doc) != 4:
            raise ConfigError("ite needs three operands", path)
        return Ite(*(formula_from_json(d, f"{path}[{i + 1}]") for i, d in enumerate(doc[1:])))
    raise ConfigError(f"unknown formula tag {tag!r}", path)


def spec_to_dict(spec: TriggerSpec) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "name": spec.name,
        "window": spec.window,
        "actions": [None if a is None else ACTION_NAMES[a] for a in spec.actions],
        "formula": formula_to_json(spec.formula),
    }


def spec_from_dict(doc: dict) -> TriggerSpec:
    if doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported trigger schema {doc.get('schema')!r}", "schema")
    try:
        actions = [None if a is None else action_index(a) for a in doc["actions"]]
        window = int(doc["window"])
    except KeyError as exc:
        raise ConfigError(f"missing field {exc.args[0]}", exc.args[0]) from exc
    except Exception as exc:
        raise ConfigError(str(exc), "actions") from exc
    formula = formula_from_json(doc.get("formula"))
    try:
        return TriggerSpec(formula, tuple(actions), window, name=doc.get("name", ""))
    except Exception as exc:
        raise ConfigError(str(exc), "formula") from exc


def dumps(spec: TriggerSpec) -> str:
    doc = spec_to_dict(spec)
    form = doc.pop("formula")
    head = json.dumps(doc, sort_keys=True)[:-1]
    if form[0] in ("and", "or"):
        body = ",\n  ".join(json.dumps(p) for p in form[1:])
        ftext = f'[\n  "{form[0]}",\n  {body}\n ]'
    else:
        ftext = json.dumps(form)
    return f'{head},\n "formula": {ftext}\n}}\n'


def loads(text: str) -> TriggerSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"trigger file is not valid JSON: {exc}") from exc
    return spec_from_dict(doc)


def save_spec(spec: TriggerSpec, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(spec))
    return path


def load_spec(path) -> TriggerSpec:
    """Load a trigger from a file, or a bundled fixture by name (``trigger3``)."""
    if str(path) in FIXTURES:
        return load_fixture(str(path))
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"trigger file {p} not found", "trigger")
    return loads(p.read_text())


def load_fixture(name: str) -> TriggerSpec:
    if name not in FIXTURES:
        raise ConfigError(f"unknown trigger fixture {name!r}; choose from {FIXTURES}", "trigger")
    text = resources.files("blastlab.trigger").joinpath("fixtures", f"{name}.json").read_text()
    return loads(text)
