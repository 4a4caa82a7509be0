"""Reading and writing the package's document formats.

All documents are JSON. Floats are always written with 17 significant
digits, which round-trips binary64 exactly and makes repeated runs
byte-identical; non-finite values serialize as null. Model files may label
states with strings through an optional ``state_labels`` array, mapped to
1..N positionally on load.
"""

from __future__ import annotations

import json
import math
import os
from typing import Any

import numpy as np

from .dsindex import (IndexStep, IndexTable, Pcl1Witness, Pcl2Witness,
                      PclCertificate)
from .errors import ModelFormatError
from .joint import JointInstance
from .model import MultiGearModel, StationaryPolicy
from .oracle import IndexabilityVerdict

SCHEMA_VERSION = 1


def format_float(x: float) -> str:
    """Decimal text with 17 significant digits; exact binary64 round-trip."""
    return format(float(x), ".17g")


def dumps(obj: Any, indent: int = 2) -> str:
    """Serialize to JSON with deterministic layout and 17-digit floats."""
    pieces: list[str] = []
    _emit(obj, pieces, indent, 0)
    pieces.append("\n")
    return "".join(pieces)


def _emit(obj: Any, out: list[str], indent: int, depth: int) -> None:
    pad = " " * (indent * (depth + 1))
    end_pad = " " * (indent * depth)
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        out.append("null" if not math.isfinite(x) else format_float(x))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, value) in enumerate(obj.items()):
            out.append(pad + json.dumps(str(key)) + ": ")
            _emit(value, out, indent, depth + 1)
            out.append(",\n" if i + 1 < len(obj) else "\n")
        out.append(end_pad + "}")
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out, indent, depth)
    elif isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        simple = all(isinstance(v, (int, float, np.integer, np.floating, str,
                                    bool, type(None))) for v in seq)
        if simple:
            inner = []
            for v in seq:
                sub: list[str] = []
                _emit(v, sub, indent, depth + 1)
                inner.append("".join(sub))
            out.append("[" + ", ".join(inner) + "]")
            return
        out.append("[\n")
        for i, value in enumerate(seq):
            out.append(pad)
            _emit(value, out, indent, depth + 1)
            out.append(",\n" if i + 1 < len(seq) else "\n")
        out.append(end_pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise ModelFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path} is not valid JSON: {exc}") from exc


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)


# -- models -----------------------------------------------------------------

def model_to_dict(model: MultiGearModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "n_states": model.n_states,
        "n_gears": model.n_gears,
        "discount": model.discount,
        "holding_cost": model.holding_cost,
        "resource_use": model.resource_use,
        "transitions": model.transitions,
        "uncontrollable": sorted(model.uncontrollable),
    }


def model_from_dict(doc: dict) -> MultiGearModel:
    try:
        labels = doc.get("state_labels")
        uncontrollable = doc.get("uncontrollable", [])
        if labels is not None:
            mapping = {str(name): i + 1 for i, name in enumerate(labels)}
            uncontrollable = [
                mapping[str(s)] if str(s) in mapping else int(s)
                for s in uncontrollable]
        else:
            uncontrollable = [int(s) for s in uncontrollable]
        return MultiGearModel(
            n_states=int(doc["n_states"]),
            n_gears=int(doc["n_gears"]),
            discount=float(doc["discount"]),
            holding_cost=doc["holding_cost"],
            resource_use=doc["resource_use"],
            transitions=doc["transitions"],
            uncontrollable=uncontrollable,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc


def load_model(path: str) -> MultiGearModel:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: model document must be a JSON object")
    return model_from_dict(doc)


def save_model(model: MultiGearModel, path: str) -> None:
    write_text(path, dumps(model_to_dict(model)))


# -- joint instances ---------------------------------------------------------

def instance_from_dict(doc: dict, base_dir: str = ".") -> JointInstance:
    try:
        raw = doc["projects"]
        budget = float(doc["budget"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed instance document: {exc}") from exc
    projects = []
    for entry in raw:
        if isinstance(entry, str):
            projects.append(load_model(os.path.join(base_dir, entry)))
        elif isinstance(entry, dict):
            projects.append(model_from_dict(entry))
        else:
            raise ModelFormatError("projects entries must be paths or model objects")
    return JointInstance(projects=tuple(projects), budget=budget)


def load_instance(path: str) -> JointInstance:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: instance document must be a JSON object")
    return instance_from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


# -- index tables and certificates -------------------------------------------

def _policy_to_gears(policy: StationaryPolicy) -> list[int]:
    return list(policy.gears)


def certificate_to_dict(cert: PclCertificate) -> dict:
    def witness1(w: Pcl1Witness | None):
        if w is None:
            return None
        return {"chain_index": w.chain_index, "policy": list(w.policy.gears),
                "state": w.state, "gear": w.gear, "value": w.value}

    def witness2(w: Pcl2Witness | None):
        if w is None:
            return None
        return {"step": w.step, "value": w.value, "next_value": w.next_value}

    return {
        "pcl1_ok": cert.pcl1_ok,
        "pcl2_ok": cert.pcl2_ok,
        "certified": cert.certified,
        "pcl1_witness": witness1(cert.pcl1_witness),
        "pcl2_witness": witness2(cert.pcl2_witness),
        "eps_g": cert.eps_g,
        "eps_m": cert.eps_m,
        "scope": cert.scope,
        "coverage": cert.coverage,
    }


def certificate_from_dict(doc: dict, states: tuple[int, ...]) -> PclCertificate:
    w1 = doc.get("pcl1_witness")
    witness1 = None
    if w1 is not None:
        witness1 = Pcl1Witness(
            chain_index=int(w1["chain_index"]),
            policy=StationaryPolicy(states, tuple(w1["policy"])),
            state=int(w1["state"]), gear=int(w1["gear"]),
            value=float(w1["value"]))
    w2 = doc.get("pcl2_witness")
    witness2 = None
    if w2 is not None:
        witness2 = Pcl2Witness(step=int(w2["step"]), value=float(w2["value"]),
                               next_value=float(w2["next_value"]))
    return PclCertificate(
        pcl1_ok=bool(doc["pcl1_ok"]), pcl2_ok=bool(doc["pcl2_ok"]),
        pcl1_witness=witness1, pcl2_witness=witness2,
        eps_g=float(doc["eps_g"]), eps_m=float(doc["eps_m"]),
        scope=str(doc["scope"]), coverage=str(doc["coverage"]))


def table_to_dict(table: IndexTable, cert: PclCertificate | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "index-table",
        "criterion": table.criterion,
        "states": list(table.policy_chain[0].states),
        "steps": [{"k": s.k, "state": s.state, "gear": s.gear, "mpi": s.value}
                  for s in table.steps],
        "policy_chain": [_policy_to_gears(p) for p in table.policy_chain],
        "certificate": None if cert is None else certificate_to_dict(cert),
    }


def table_from_dict(doc: dict) -> tuple[IndexTable, PclCertificate | None]:
    try:
        states = tuple(int(s) for s in doc["states"])
        steps = tuple(
            IndexStep(k=int(s["k"]), state=int(s["state"]), gear=int(s["gear"]),
                      value=float("nan") if s["mpi"] is None else float(s["mpi"]))
            for s in doc["steps"])
        chain = tuple(StationaryPolicy(states, tuple(int(a) for a in gears))
                      for gears in doc["policy_chain"])
        table = IndexTable(steps=steps, policy_chain=chain,
                           criterion=str(doc.get("criterion", "discounted")))
        cert_doc = doc.get("certificate")
        cert = None if cert_doc is None else certificate_from_dict(cert_doc, states)
        return table, cert
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelFormatError(f"malformed index-table document: {exc}") from exc


def load_table(path: str) -> tuple[IndexTable, PclCertificate | None]:
    doc = read_json(path)
    if not isinstance(doc, dict) or doc.get("kind") != "index-table":
        raise ModelFormatError(f"{path} is not an index-table document")
    return table_from_dict(doc)


def table_to_csv(table: IndexTable) -> str:
    lines = ["k,state,gear,mpi"]
    for s in table.steps:
        mpi = "" if not math.isfinite(s.value) else format_float(s.value)
        lines.append(f"{s.k},{s.state},{s.gear},{mpi}")
    return "\n".join(lines) + "\n"


# -- verdicts -----------------------------------------------------------------

def verdict_to_dict(verdict: IndexabilityVerdict) -> dict:
    ce = verdict.counterexample
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "indexability-verdict",
        "indexable_on_grid": verdict.indexable_on_grid,
        "max_dai_vs_mpi_gap": verdict.max_dai_vs_mpi_gap,
        "probes_checked": verdict.probes_checked,
        "counterexample": None if ce is None else {
            "lambda": ce.lam, "state": ce.state, "description": ce.description},
        "pairs": [{"state": e.state, "gear": e.gear, "mpi": e.mpi,
                   "dai_lo": e.lo, "dai_hi": e.hi, "gap": e.gap,
                   "non_monotone": e.non_monotone}
                  for e in verdict.dai_estimates],
    }
