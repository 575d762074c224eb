"""
Experiment manifests and the resumable pipeline that runs them.

An experiment directory holds one record per (network, profile) under ``records/``; every other
artifact is rebuilt from those records in canonical order, so a rerun only computes what is
missing and reproduces the same bytes whatever the worker count.
"""
import hashlib
import logging
import traceback
from dataclasses import dataclass, field
from gettext import gettext as _
from itertools import groupby
from pathlib import Path
from typing import Dict, List, Tuple

import yaml

from gridstrain import grid as grid_utils
from gridstrain.app.loggers import experiment_context
from gridstrain.app.progress import ProgressReport
from gridstrain.app.settings import DEFAULTS, override_settings, settings
from gridstrain.app.util import (
    dumps,
    read_json,
    read_jsonl,
    write_csv,
    write_json,
    write_jsonl,
)
from gridstrain.attack import derive_seed, run_attack
from gridstrain.constants import DECISION_FLAGS, GRID_FORMATS
from gridstrain.exceptions import GridStrainException, ManifestError, exception_to_dict
from gridstrain.metrics import (
    measures_for_profile,
    normalize_batch,
    summaries_for,
    write_metrics_csv,
)
from gridstrain.models import AttackCampaignResult
from gridstrain.powerflow import solve_grid_flow, write_flow_csv
from gridstrain.profiles import generate_profile_grid
from gridstrain.setse import SolverConfig, embed_grid
from gridstrain.tasking.pool import WorkerPool, shared

_logger = logging.getLogger(__name__)

BUILTIN_PREFIX = "builtin:"
DATA_DIR = Path(__file__).resolve().parent.parent / "data"

STAGES = ("embed", "attack")

#: Key under which a profile record stores the result of each stage.
STAGE_RECORD_KEYS = {"embed": "embedding", "attack": "campaign"}

_MANIFEST_KEYS = {
    "name",
    "grids",
    "parameters",
    "n_runs",
    "master_seed",
    "settings",
    "save_embeddings",
}
_PARAMETER_KEYS = {"alpha_set", "p_set", "f_set", "q_set", "include_proportional"}

CAMPAIGN_COLUMNS = [
    "network",
    "profile_id",
    "kind",
    "alpha",
    "p",
    "f",
    "q",
    "direction",
    "n_runs",
    "mean_collapse_round",
    "mean_power_lost",
    "min_power_lost",
    "max_power_lost",
]


@dataclass(frozen=True)
class GridSource:
    """A grid file (or a bundled grid, ``builtin:<name>``) and its format."""

    path: str
    format: str = GRID_FORMATS.CANONICAL_JSON

    def load(self):
        if self.path.startswith(BUILTIN_PREFIX):
            name = self.path[len(BUILTIN_PREFIX) :]  # noqa: E203
            path = DATA_DIR / "{}.json".format(name)
            if not path.exists():
                raise ManifestError(_("no bundled grid named '{}'").format(name))
            return grid_utils.load_grid(path, GRID_FORMATS.CANONICAL_JSON)
        return grid_utils.load_grid(self.path, self.format)


@dataclass(frozen=True)
class ExperimentManifest:
    """
    Everything that determines the outputs of an experiment.

    ``settings`` holds overrides of any setting (solver constants, tolerances, ...) for this
    experiment only.
    """

    name: str
    grids: Tuple[GridSource, ...]
    alpha_set: Tuple = ()
    p_set: Tuple = ()
    f_set: Tuple = ()
    q_set: Tuple = ()
    include_proportional: bool = False
    n_runs: int = 100
    master_seed: int = 0
    settings: Dict = field(default_factory=dict)
    save_embeddings: bool = False

    def document(self, grids):
        """
        The resolved manifest as a plain dict. Grids are identified by name and by a digest of
        their canonical document, not by path.
        """
        return {
            "name": self.name,
            "grids": [
                {
                    "name": grid.name,
                    "digest": hashlib.sha256(
                        dumps(grid_utils.grid_to_document(grid)).encode("utf8")
                    ).hexdigest(),
                }
                for grid in grids
            ],
            "parameters": {
                "alpha_set": list(self.alpha_set),
                "p_set": list(self.p_set),
                "f_set": list(self.f_set),
                "q_set": list(self.q_set),
                "include_proportional": self.include_proportional,
            },
            "n_runs": self.n_runs,
            "master_seed": self.master_seed,
            "settings": dict(sorted(self.settings.items())),
            "decision_flags": dict(DECISION_FLAGS),
        }

    def manifest_id(self, grids):
        return hashlib.sha256(dumps(self.document(grids)).encode("utf8")).hexdigest()[:16]


def _tuple(value, name, path):
    if isinstance(value, (list, tuple)):
        return tuple(value)
    raise ManifestError(_("'{}' must be a list").format(name), path)


def load_manifest(path, lazy=None):
    """
    Read a YAML manifest. Missing parameters fall back to the settings.

    Grid paths are relative to the manifest file.

    Raises:
        ManifestError: unreadable YAML, unknown keys or malformed values.
    """
    lazy = settings if lazy is None else lazy
    path = Path(path)
    try:
        with open(path) as handle:
            raw = yaml.safe_load(handle) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ManifestError(str(exc), str(path))
    if not isinstance(raw, dict):
        raise ManifestError(_("top level must be a mapping"), str(path))
    unknown = set(raw) - _MANIFEST_KEYS
    if unknown:
        raise ManifestError(_("unknown keys {}").format(sorted(unknown)), str(path))
    parameters = raw.get("parameters") or {}
    unknown = set(parameters) - _PARAMETER_KEYS
    if unknown:
        raise ManifestError(_("unknown parameters {}").format(sorted(unknown)), str(path))
    overrides = raw.get("settings") or {}
    bad = [name for name in overrides if name.upper() not in DEFAULTS]
    if bad:
        raise ManifestError(_("unknown settings {}").format(bad), str(path))

    grids = []
    for entry in raw.get("grids") or []:
        if isinstance(entry, str):
            entry = {"path": entry}
        if "path" not in entry:
            raise ManifestError(_("every grid needs a path"), str(path))
        grid_path = str(entry["path"])
        if not grid_path.startswith(BUILTIN_PREFIX) and not Path(grid_path).is_absolute():
            grid_path = str(path.parent / grid_path)
        grids.append(GridSource(grid_path, entry.get("format", GRID_FORMATS.CANONICAL_JSON)))
    if not grids:
        raise ManifestError(_("at least one grid is required"), str(path))

    manifest = ExperimentManifest(
        name=str(raw.get("name", path.stem)),
        grids=tuple(grids),
        alpha_set=_tuple(parameters.get("alpha_set", lazy.ALPHA_SET), "alpha_set", path),
        p_set=_tuple(parameters.get("p_set", lazy.P_SET), "p_set", path),
        f_set=_tuple(parameters.get("f_set", lazy.F_SET), "f_set", path),
        q_set=_tuple(parameters.get("q_set", lazy.Q_SET), "q_set", path),
        include_proportional=bool(
            parameters.get("include_proportional", lazy.INCLUDE_PROPORTIONAL)
        ),
        n_runs=int(raw.get("n_runs", lazy.N_RUNS)),
        master_seed=int(raw.get("master_seed", lazy.MASTER_SEED)),
        settings={name.upper(): value for name, value in overrides.items()},
        save_embeddings=bool(raw.get("save_embeddings", lazy.SAVE_EMBEDDINGS)),
    )
    if manifest.n_runs < 1:
        raise ManifestError(_("n_runs must be >= 1"), str(path))
    return manifest


def manifest_from_settings(grid_path, grid_format=GRID_FORMATS.CANONICAL_JSON, lazy=None):
    """
    A one-grid manifest built from the current settings, for the single-step commands.
    """
    lazy = settings if lazy is None else lazy
    source = GridSource(str(grid_path), grid_format)
    return ExperimentManifest(
        name=Path(str(grid_path)).stem,
        grids=(source,),
        alpha_set=tuple(lazy.ALPHA_SET),
        p_set=tuple(lazy.P_SET),
        f_set=tuple(lazy.F_SET),
        q_set=tuple(lazy.Q_SET),
        include_proportional=bool(lazy.INCLUDE_PROPORTIONAL),
        n_runs=int(lazy.N_RUNS),
        master_seed=int(lazy.MASTER_SEED),
        save_embeddings=bool(lazy.SAVE_EMBEDDINGS),
    )


def record_path(out_dir, network, profile_id):
    return Path(out_dir) / "records" / network / "{}.json".format(profile_id)


def read_record(out_dir, network, profile_id):
    path = record_path(out_dir, network, profile_id)
    return read_json(path) if path.exists() else None


def _failure(exc):
    return exception_to_dict(exc, "".join(traceback.format_tb(exc.__traceback__)))


def run_unit(unit):
    """
    Run one work unit against the shared inputs of this process.

    Units are ``("embed", profile_index, None)`` or ``("attack", profile_index, run_index)``.
    Failures come back as error dicts instead of propagating, so one bad unit never stops the
    pool.
    """
    kind, profile_index, run_index = unit
    inputs = shared()
    profile = inputs["profiles"][profile_index]
    try:
        if kind == "attack":
            seed = derive_seed(inputs["master_seed"], run_index)
            result = run_attack(inputs["grid"], profile, seed)
            return unit, result, None
        embedding = embed_grid(
            inputs["grid"], profile, inputs["base_flow"], config=SolverConfig.from_settings()
        )
        measures = measures_for_profile(inputs["grid"], profile, inputs["base_flow"], embedding)
        payload = {"measures": dict(measures), "convergence": embedding.convergence}
        if inputs.get("save_embeddings"):
            payload["embedding"] = embedding.as_record()
        return unit, payload, None
    except GridStrainException as exc:
        return unit, None, _failure(exc)
    except Exception as exc:
        _logger.exception(_("Unit %s failed"), unit)
        return unit, None, _failure(exc)


@dataclass
class ExperimentOutcome:
    """
    What a run did: manifest id, profiles computed this time, profiles already done, failures.
    """

    manifest_id: str
    out_dir: Path
    computed: List[Tuple[str, str]] = field(default_factory=list)
    reused: List[Tuple[str, str]] = field(default_factory=list)
    errors: List[Dict] = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors


def _pending_units(network, profiles, out_dir, stages, n_runs):
    units = []
    reused = []
    for index, profile in enumerate(profiles):
        record = read_record(out_dir, network, profile.profile_id) or {}
        missing = [
            stage for stage in STAGES if stage in stages and STAGE_RECORD_KEYS[stage] not in record
        ]
        if not missing:
            reused.append((network, profile.profile_id))
            continue
        if "embed" in missing:
            units.append(("embed", index, None))
        if "attack" in missing:
            units.extend(("attack", index, run) for run in range(n_runs))
    return units, reused


def _store_profile(out_dir, manifest_id, grid, profile, base_flow, results):
    record = read_record(out_dir, grid.name, profile.profile_id) or {}
    record.update(
        {
            "network": grid.name,
            "profile_id": profile.profile_id,
            "parameters": profile.parameters.as_dict(),
        }
    )
    runs = [result for (kind, _index, _run), result in results if kind == "attack"]
    if runs:
        campaign = AttackCampaignResult.from_runs(profile.profile_id, runs)
        record["campaign"] = campaign.as_record()
    embedded = [result for (kind, _index, _run), result in results if kind == "embed"]
    if embedded:
        record["embedding"] = {
            "convergence": embedded[0]["convergence"],
            "measures": embedded[0]["measures"],
        }
        if "embedding" in embedded[0]:
            write_embedding_record(out_dir, grid.name, profile.profile_id, embedded[0], manifest_id)
    measures = dict(measures_for_profile(grid, profile, base_flow))
    measures.update(record.get("embedding", {}).get("measures", {}))
    record["measures"] = measures
    for key in ("manifest_id",) + tuple(DECISION_FLAGS):
        record.pop(key, None)
    write_json(record_path(out_dir, grid.name, profile.profile_id), record, manifest_id)


def write_embedding_record(out_dir, network, profile_id, payload, manifest_id):
    path = Path(out_dir) / "embeddings" / network / "{}.json".format(profile_id)
    write_json(path, payload["embedding"], manifest_id=manifest_id)


def _run_network(manifest, manifest_id, grid, out_dir, workers, stages, outcome):
    base_flow = solve_grid_flow(grid)
    profiles, skipped = generate_profile_grid(
        grid,
        base_flow,
        manifest.alpha_set,
        manifest.p_set,
        manifest.f_set,
        manifest.q_set,
        include_proportional=manifest.include_proportional,
    )
    units, reused = _pending_units(grid.name, profiles, out_dir, stages, manifest.n_runs)
    outcome.reused.extend(reused)
    _logger.info(
        _("%(network)s: %(profiles)d profiles, %(reused)d already complete, %(units)d units"),
        {
            "network": grid.name,
            "profiles": len(profiles),
            "reused": len(reused),
            "units": len(units),
        },
    )
    payload = {
        "experiment_id": manifest_id,
        "grid": grid,
        "base_flow": base_flow,
        "profiles": profiles,
        "master_seed": manifest.master_seed,
        "save_embeddings": manifest.save_embeddings,
        "settings": dict(manifest.settings),
    }
    with WorkerPool(workers, payload) as pool, ProgressReport(
        message=_("Simulating {}").format(grid.name), code="simulate", total=len(units)
    ) as progress:
        results = progress.iter(pool.imap(run_unit, units, chunksize=max(1, manifest.n_runs // 4)))
        for index, group in groupby(results, key=lambda item: item[0][1]):
            group = list(group)
            profile = profiles[index]
            failures = [error for _unit, _result, error in group if error is not None]
            if failures:
                for error in failures[:1]:
                    outcome.errors.append(
                        dict(error, network=grid.name, profile_id=profile.profile_id)
                    )
                _logger.error(
                    _("Profile %(profile)s failed: %(error)s"),
                    {"profile": profile.profile_id, "error": failures[0]["description"]},
                )
                continue
            _store_profile(
                out_dir,
                manifest_id,
                grid,
                profile,
                base_flow,
                [(unit, result) for unit, result, _error in group],
            )
            outcome.computed.append((grid.name, profile.profile_id))
    return base_flow, profiles, skipped


def rebuild_artifacts(out_dir, manifest, manifest_id, networks):
    """
    Write every aggregate artifact from the per-profile records, in canonical order.

    Args:
        networks (list): ``(grid, base_flow, profiles, skipped)`` per grid, in manifest order.
    """
    out_dir = Path(out_dir)
    write_json(
        out_dir / "manifest.json",
        dict(manifest.document([n[0] for n in networks]), manifest_id=manifest_id),
    )
    write_json(
        out_dir / "grid_summary.json",
        {"grids": [grid_utils.summary_statistics(n[0]).as_dict() for n in networks]},
        manifest_id=manifest_id,
    )
    flow_rows = []
    for grid, base_flow, _profiles, _skipped in networks:
        flow_rows.extend(
            {"network": grid.name, "line_id": line_id, "flow_mw": float(flow)}
            for line_id, flow in zip(grid.line_ids, base_flow.flows)
        )
    write_csv(out_dir / "base_flow.csv", ["network", "line_id", "flow_mw"], flow_rows, manifest_id)

    profile_records, skipped_records, records = [], [], []
    for grid, _base_flow, profiles, skipped in networks:
        profile_records.extend(dict(p.as_record(grid), network=grid.name) for p in profiles)
        skipped_records.extend(dict(s, network=grid.name) for s in skipped)
        for profile in profiles:
            record = read_record(out_dir, grid.name, profile.profile_id)
            if record is not None:
                records.append(record)
    write_jsonl(out_dir / "profiles.jsonl", profile_records, manifest_id)
    write_jsonl(out_dir / "skipped_profiles.jsonl", skipped_records, manifest_id)

    campaigns = [r for r in records if "campaign" in r]
    write_jsonl(
        out_dir / "campaigns.jsonl",
        (
            dict(r["campaign"], network=r["network"], parameters=r["parameters"])
            for r in campaigns
        ),
        manifest_id,
    )
    write_csv(
        out_dir / "campaigns.csv",
        CAMPAIGN_COLUMNS,
        (
            dict(
                r["parameters"],
                network=r["network"],
                profile_id=r["profile_id"],
                **{
                    key: r["campaign"][key]
                    for key in (
                        "n_runs",
                        "mean_collapse_round",
                        "mean_power_lost",
                        "min_power_lost",
                        "max_power_lost",
                    )
                },
            )
            for r in campaigns
        ),
        manifest_id,
    )
    write_batch_metrics(out_dir, records, manifest_id)
    ledger = sorted(
        {
            (r["network"], r["profile_id"], stage)
            for r in records
            for stage in STAGES
            if STAGE_RECORD_KEYS[stage] in r
        }
    )
    write_jsonl(
        out_dir / "ledger.jsonl",
        ({"network": n, "profile_id": p, "stage": s} for n, p, s in ledger),
    )


def run_experiment(manifest, out_dir, workers=None, stages=STAGES):
    """
    Run (or resume) an experiment into ``out_dir``.

    For every grid: solve the base flow, generate the profiles, compute the missing embedding
    and attack units on a worker pool, store one record per profile, then rebuild the aggregate
    artifacts. Per-profile failures are collected in ``errors.jsonl`` and never stop the run.

    Args:
        manifest (ExperimentManifest): what to compute.
        out_dir (str): experiment directory, created if needed.
        workers (int): pool size, defaults to the setting.
        stages (tuple): subset of ``("embed", "attack")``.

    Returns:
        ExperimentOutcome: manifest id, computed and reused profiles, errors.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with override_settings(manifest.settings):
        return _run(manifest, out_dir, workers, stages)


def _run(manifest, out_dir, workers, stages):
    workers = settings.WORKERS if workers is None else workers
    grids = [source.load() for source in manifest.grids]
    names = [grid.name for grid in grids]
    if len(set(names)) != len(names):
        raise ManifestError(_("grid names must be unique, got {}").format(names))
    manifest_id = manifest.manifest_id(grids)
    outcome = ExperimentOutcome(manifest_id=manifest_id, out_dir=out_dir)
    with experiment_context(manifest_id):
        _logger.info(
            _("Experiment %(name)s (%(id)s) into %(out)s"),
            {"name": manifest.name, "id": manifest_id, "out": out_dir},
        )
        networks = []
        for grid in grids:
            base_flow, profiles, skipped = _run_network(
                manifest, manifest_id, grid, out_dir, workers, stages, outcome
            )
            networks.append((grid, base_flow, profiles, skipped))
        rebuild_artifacts(out_dir, manifest, manifest_id, networks)
        write_jsonl(out_dir / "errors.jsonl", outcome.errors, manifest_id)
        _logger.info(
            _("Computed %(computed)d profiles, reused %(reused)d, %(errors)d failed"),
            {
                "computed": len(outcome.computed),
                "reused": len(outcome.reused),
                "errors": len(outcome.errors),
            },
        )
    return outcome


def write_base_flow(out_dir, grid, manifest_id=""):
    """Intact-grid flow of a single grid, used by ``ingest``."""
    solution = solve_grid_flow(grid)
    write_flow_csv(Path(out_dir) / "base_flow.csv", grid, solution, manifest_id)
    return solution


def write_batch_metrics(out_dir, records, manifest_id=""):
    """
    Normalize the raw measures of a batch of records and write ``metrics.csv``.
    """
    summaries = []
    for record in records:
        summaries.extend(summaries_for(record["network"], record["profile_id"], record["measures"]))
    normalized = normalize_batch(summaries)
    write_metrics_csv(Path(out_dir) / "metrics.csv", normalized, manifest_id)
    return normalized


def rebuild_metrics(out_dir):
    """
    Recompute ``metrics.csv`` from the records of an experiment directory, in the profile order of
    ``profiles.jsonl``.

    Raises:
        ManifestError: the directory holds no experiment.
    """
    out_dir = Path(out_dir)
    if not (out_dir / "profiles.jsonl").exists():
        raise ManifestError(_("no profiles.jsonl, not an experiment directory"), str(out_dir))
    manifest_id = ""
    if (out_dir / "manifest.json").exists():
        manifest_id = read_json(out_dir / "manifest.json").get("manifest_id", "")
    records = []
    for entry in read_jsonl(out_dir / "profiles.jsonl"):
        record = read_record(out_dir, entry["network"], entry["profile_id"])
        if record is not None:
            records.append(record)
    return write_batch_metrics(out_dir, records, manifest_id)
