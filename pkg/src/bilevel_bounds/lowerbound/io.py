"""Versioned JSON records of hard instances.

Only scalar parameters are stored; every matrix (rotations included) is
rebuilt deterministically from them.
"""
import json

from ..errors import ContractError, ParseError
from .instances import ChainLayout, NcscHardInstance
from .stochastic import StochasticHardInstance
from .upsilon import UpsilonParams

FORMAT = "bilevel-bounds-instance"
VERSION = 1


def instance_record(inst):
    return {"format": FORMAT, "version": VERSION, "params": inst.params()}


def save_instance(inst, path):
    with open(path, "w") as fh:
        json.dump(instance_record(inst), fh, indent=2, sort_keys=True)
        fh.write("\n")


def instance_from_record(rec):
    if rec.get("format") != FORMAT:
        raise ParseError(f"not an instance record (format={rec.get('format')!r})")
    if rec.get("version") != VERSION:
        raise ParseError(f"unsupported instance record version {rec.get('version')!r}")
    p = rec["params"]
    regime = p.get("regime")
    if regime == "stochastic":
        return StochasticHardInstance(p["T"], p["d"], p["p"], p["beta"], p["L1"], p["mu_y"], seed=p["seed"],
                                      sigma=p["sigma"], Delta=p["Delta"], eps=p["eps"], prog_tol=p["prog_tol"])
    if regime not in ("nc", "csc", "scsc"):
        raise ContractError(f"unknown regime {regime!r}")
    layout = ChainLayout(p["T"], p["K"], allow_small_k=p["allow_small_k"])
    ups = UpsilonParams(r=p["r"], nu=p["nu"]) if regime == "nc" else None
    L = p.get("L") or []
    return NcscHardInstance(layout, ups, p["beta"], p["L1"], p["mu_y"], regime, mu_x=p["mu_x"],
                            Delta=p["Delta"], ell_bar=p["ell_bar_1"], p=p["p"], L=L[1:-1] if len(L) > 2 else None,
                            n_ups=p["n_ups"], rotation_seed=p["rotation_seed"], eps=p["eps"])


def load_instance(path):
    try:
        with open(path) as fh:
            rec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc.msg), line=exc.lineno) from None
    return instance_from_record(rec)
