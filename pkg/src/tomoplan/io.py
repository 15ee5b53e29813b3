"""File formats: experiment specs, states, designs, campaign tables.

JSON carries everything structured (experiment definitions, designs,
summaries); campaign tables are CSV with one row per sample state.  Every
output embeds a run manifest whose fields are all deterministic functions
of the invocation, so re-running the same command bytes out identically;
a creation time is only recorded when SOURCE_DATE_EPOCH supplies one.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bloch import ExperimentSetup, HermitianBasis, MeasurementConfig, \
    config_from_matrices, density_to_bloch, generate_basis
from .errors import ValidationError
from .montecarlo import CampaignResult

TOOL_VERSION = "0.1.0"


def _matrix_from_parts(entry: dict, n: int, where: str) -> np.ndarray:
    try:
        re_part = np.array(entry["re"], dtype=float)
        im_part = np.array(entry.get("im", np.zeros((n, n))), dtype=float)
    except (KeyError, TypeError, ValueError) as err:
        raise ValidationError(f"{where}: bad matrix payload ({err})") from None
    if re_part.shape != (n, n) or im_part.shape != (n, n):
        raise ValidationError(
            f"{where}: matrix must be {n}x{n}, got {re_part.shape}/{im_part.shape}")
    matrix = re_part + 1j * im_part
    if not np.all(np.isfinite(re_part)) or not np.all(np.isfinite(im_part)):
        raise ValidationError(f"{where}: matrix entries must be finite")
    return matrix


def load_experiment(path: str | Path) -> ExperimentSetup:
    """Read an experiment definition.

    Expected layout: {"dimension": N, "configurations": [{"label": ...,
    "elements": [{"re": [[...]], "im": [[...]]}, ...]}, ...]}.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ValidationError(
            f"{path}: invalid JSON at line {err.lineno}, column {err.colno}: "
            f"{err.msg}") from None
    except OSError as err:
        raise ValidationError(f"{path}: {err}") from None
    if not isinstance(payload, dict):
        raise ValidationError(f"{path}: top level must be an object")
    try:
        dimension = int(payload["dimension"])
        configurations = payload["configurations"]
    except (KeyError, TypeError, ValueError):
        raise ValidationError(
            f"{path}: need integer 'dimension' and list 'configurations'") from None
    basis = generate_basis(dimension)
    configs = []
    for k, cfg in enumerate(configurations):
        label = str(cfg.get("label", f"config-{k}"))
        elements = cfg.get("elements")
        if not elements:
            raise ValidationError(f"{path}: configuration {label!r} has no elements")
        matrices = [_matrix_from_parts(e, dimension, f"{path}:{label}[{i}]")
                    for i, e in enumerate(elements)]
        configs.append(config_from_matrices(label, matrices, basis))
    return ExperimentSetup(basis=basis, configs=tuple(configs))


def save_experiment(setup: ExperimentSetup, path: str | Path) -> None:
    payload = {
        "dimension": setup.dimension,
        "configurations": [
            {
                "label": cfg.label,
                "elements": [
                    {"re": np.real(out.matrix).tolist(),
                     "im": np.imag(out.matrix).tolist()}
                    for out in cfg.outcomes
                ],
            }
            for cfg in setup.configs
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_state(path: str | Path, basis: HermitianBasis) -> np.ndarray:
    """Read a state file, either {"bloch": [...]} or {"density": {re, im}}."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ValidationError(
            f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from None
    if "bloch" in payload:
        r = np.array(payload["bloch"], dtype=float)
        expected = basis.dimension ** 2 - 1
        if r.shape != (expected,):
            raise ValidationError(
                f"{path}: coordinate vector must have length {expected}")
        return r
    if "density" in payload:
        n = basis.dimension
        rho = _matrix_from_parts(payload["density"], n, str(path))
        return density_to_bloch(rho, basis).r
    raise ValidationError(f"{path}: state file needs 'bloch' or 'density'")


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce an output file byte for byte."""

    command: str
    inputs: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    seed: int | None = None
    tool_version: str = TOOL_VERSION
    created: int | None = None

    @classmethod
    def build(cls, command: str, inputs: dict, parameters: dict,
              seed: int | None = None) -> "RunManifest":
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        return cls(command=command, inputs=dict(inputs),
                   parameters=dict(parameters), seed=seed,
                   created=int(epoch) if epoch else None)

    def to_dict(self) -> dict:
        return asdict(self)


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_design_file(path: str | Path, method: str, weights: np.ndarray,
                      objective_name: str, objective_value: float,
                      diagnostics: dict, manifest: RunManifest) -> None:
    payload = {
        "method": method,
        "lambda": [float(w) for w in weights],
        "objective": {"name": objective_name, "value": objective_value},
        "diagnostics": diagnostics,
        "manifest": manifest.to_dict(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_design_weights(path: str | Path) -> np.ndarray:
    payload = json.loads(Path(path).read_text())
    try:
        return np.array(payload["lambda"], dtype=float)
    except (KeyError, TypeError, ValueError):
        raise ValidationError(f"{path}: design file needs a 'lambda' list") from None


def write_campaign_csv(path: str | Path, result: CampaignResult) -> None:
    """One row per sample state: spherical coordinates, bound, errors."""
    names = [name for name in result.estimators if name in result.mse]
    header = ["state_index", "radius", "polar", "azimuth", "crb_per_shot"]
    header += [f"mse_{name.replace('-', '_')}" for name in names]
    lines = [",".join(header)]
    for i in range(len(result.grid)):
        row = [str(i)] + [_fmt(v) for v in result.grid.spherical[i]]
        row.append(_fmt(result.crb[i]))
        row += [_fmt(result.mse[name][i]) for name in names]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_campaign_summary(path: str | Path, result: CampaignResult,
                           manifest: RunManifest,
                           improvement: dict | None = None) -> None:
    payload = {
        "summary": result.summary(),
        "manifest": manifest.to_dict(),
    }
    if improvement is not None:
        payload["improvement_vs_uniform"] = improvement
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
