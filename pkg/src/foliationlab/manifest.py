"""Run manifests and deterministic report emission.

Every CLI run writes one manifest: the resolved configuration, the model,
every constant with its provenance, all seeds, and the artifact paths. The
digest is the sha256 of the canonical JSON (sorted keys, fixed float
formatting) without the digest field, so identical manifests mean identical
runs, and reruns are byte-identical. No timestamps anywhere.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "foliationlab"

import matplotlib.pyplot as plt

from .constants import ConstantsBundle

__all__ = ["RunManifest", "write_csv", "write_slope_svg"]


def _canonical(obj):
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, complex):
        return [float(f"{obj.real:.12g}"), float(f"{obj.imag:.12g}")]
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


@dataclasses.dataclass
class RunManifest:
    command: str
    config: dict
    model: dict
    constants: dict
    seeds: dict
    artifacts: list

    @classmethod
    def build(cls, command, config, model_dict, bundle: ConstantsBundle, seeds, artifacts=()):
        cdict = {}
        for f in dataclasses.fields(bundle):
            if f.name == "provenance":
                continue
            cdict[f.name] = getattr(bundle, f.name)
        cdict = {k: (v if not isinstance(v, float) else float(f"{v:.12g}")) for k, v in cdict.items()}
        prov = dict(bundle.provenance)
        for k in cdict:
            prov.setdefault(k, {"source": "configured"})
        return cls(command, dict(config), dict(model_dict),
                   {"values": cdict, "provenance": prov}, dict(seeds), list(artifacts))

    def digest(self) -> str:
        body = _canonical(dataclasses.asdict(self))
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def save(self, path):
        path = Path(path)
        body = _canonical(dataclasses.asdict(self))
        body["digest"] = self.digest()
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        return path


def write_csv(path, rows):
    """Deterministic CSV writer (no quoting surprises, \\n endings)."""
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")
    return path


def write_slope_svg(path, report):
    """Static SVG of the entropy slope table (deterministic output)."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for eps in report.eps_grid:
        xs = list(report.R_grid)
        ys = [report.slopes[(R, eps)] for R in xs]
        ax.plot(xs, ys, marker="o", label=f"eps={eps:g}")
    ax.set_xlabel("R")
    ax.set_ylabel("log N / R")
    ax.set_title("entropy slope estimates")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)
