"""Flat-file persistence: policy JSON, key=value manifests, tidy CSV emission.

Every writer goes through an atomic write-then-rename and formats floats
with their shortest round-trip decimal form, so reruns with the same seeds
produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np

from . import gp
from .solver_ab import Policy, StageSurrogates

__all__ = [
    "atomic_write_text",
    "write_csv",
    "write_manifest",
    "sha256_text",
    "sha256_file",
    "save_policy",
    "load_policy",
]

POLICY_FORMAT = 1


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp_", text=False)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_manifest(path, entries) -> None:
    """Write an ordered mapping as key=value lines."""
    atomic_write_text(path, "".join(f"{k} = {_fmt(v)}\n" for k, v in entries))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------------------
# policy serialization


def _surrogate_record(surr) -> dict:
    if isinstance(surr, gp.ConstantSurrogate):
        return {
            "kind": "constant",
            "value": float(surr.value),
            "inputs": surr.x_raw.tolist(),
            "targets": surr.y_raw.tolist(),
        }
    return {
        "kind": "gp",
        "inputs": surr.x_raw.tolist(),
        "targets": surr.y_raw.tolist(),
        "kept": surr.kept.tolist(),
        "lo": surr.lo.tolist(),
        "span": surr.span.tolist(),
        "t_mean": float(surr.t_mean),
        "t_sd": float(surr.t_sd),
        "signal_var": float(surr.hyper.signal_var),
        "lengthscales": list(surr.hyper.lengthscales),
        "nugget_var": float(surr.hyper.nugget_var),
    }


def _surrogate_from_record(rec: dict):
    if rec["kind"] == "constant":
        return gp.ConstantSurrogate(
            value=float(rec["value"]),
            x_raw=np.asarray(rec["inputs"], dtype=float),
            y_raw=np.asarray(rec["targets"], dtype=float),
        )
    return gp.reconstruct(
        x_raw=np.asarray(rec["inputs"], dtype=float),
        y_raw=np.asarray(rec["targets"], dtype=float),
        kept=np.asarray(rec["kept"], dtype=int),
        lo=np.asarray(rec["lo"], dtype=float),
        span=np.asarray(rec["span"], dtype=float),
        t_mean=float(rec["t_mean"]),
        t_sd=float(rec["t_sd"]),
        hyper=gp.KernelHyper(
            signal_var=float(rec["signal_var"]),
            lengthscales=tuple(float(v) for v in rec["lengthscales"]),
            nugget_var=float(rec["nugget_var"]),
        ),
    )


def policy_to_json(policy: Policy, config_sha: str | None = None) -> str:
    doc = {
        "format": POLICY_FORMAT,
        "method": policy.method,
        "c0": policy.c0,
        "horizon": policy.horizon,
        "root_control": policy.root_control,
        "root_value": policy.root_value,
        "eta": policy.eta,
        "r": policy.r,
        "y0": policy.y0,
        "config_sha256": config_sha,
        "stages": [
            {
                "t": t,
                "value": _surrogate_record(policy.stages[t].value),
                "control": _surrogate_record(policy.stages[t].control),
            }
            for t in sorted(policy.stages)
        ],
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def save_policy(policy: Policy, path, config_sha: str | None = None) -> None:
    atomic_write_text(path, policy_to_json(policy, config_sha))


def load_policy(path) -> Policy:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != POLICY_FORMAT:
        raise ValueError(f"unsupported policy file format: {doc.get('format')!r}")
    stages = {
        int(rec["t"]): StageSurrogates(
            value=_surrogate_from_record(rec["value"]),
            control=_surrogate_from_record(rec["control"]),
        )
        for rec in doc["stages"]
    }
    return Policy(
        method=doc["method"],
        c0=doc["c0"],
        horizon=int(doc["horizon"]),
        root_control=float(doc["root_control"]),
        root_value=float(doc["root_value"]),
        eta=float(doc["eta"]),
        r=float(doc["r"]),
        y0=float(doc["y0"]),
        stages=stages,
    )
