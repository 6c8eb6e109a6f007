"""``mlblock`` command line: design, simulate, compare, replay.

Exit status: 0 success, 1 configuration error, 2 data error, 3 internal
invariant violation (including a replay whose outputs differ).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .assignment import assign_within_blocks, rerandomize
from .blocking import Partition, definition_from_dict
from .config import MethodConfig, RunConfig, load_config, parse_config
from .dataset import PanelDataset, PanelSchema, load_panel
from .designs import BlockedDesign, PairedDesign, RerandomizedDesign, make_design
from .errors import ConfigError, DataError, FoldError, MlblockError
from .report import markdown_table, write_csv
from .seeds import derive
from .select import StrategyScore, compare_by_cv, compare_on_pre3, tradeoff_select_pre3, write_scores
from .sim import SyntheticDGPSpec, generate_synthetic_panel, run_placebo_sims, spec_metadata

log = logging.getLogger("mlblock")

COMMANDS = ("design", "simulate", "compare")
# seed streams derived from the master seed
DATA, FIT, ASSIGN, SIM, SELECT = 100, 101, 102, 103, 104


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _json_dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def load_data(cfg: RunConfig) -> PanelDataset:
    if cfg.input and cfg.synthetic:
        raise ConfigError("give either 'input' or 'synthetic', not both")
    if cfg.synthetic is not None:
        s = cfg.synthetic.model_dump()
        s["coefficients"] = tuple(s["coefficients"]) if s["coefficients"] is not None else None
        return generate_synthetic_panel(SyntheticDGPSpec(**s, seed=derive(cfg.seed, DATA)))
    if not cfg.input:
        raise ConfigError("missing data source: set 'input' (with 'panel_schema') or 'synthetic'")
    if cfg.panel_schema is None:
        raise ConfigError("'panel_schema' is required with 'input'")
    try:
        schema = PanelSchema.from_mapping(cfg.panel_schema)
    except (TypeError, KeyError, ValueError) as err:
        raise ConfigError(f"'panel_schema': {err}") from None
    try:
        return load_panel(cfg.input, schema)
    except OSError as err:
        raise DataError(f"cannot read input {cfg.input}: {err.strerror or err}") from None


def _design_panel(panel: PanelDataset) -> PanelDataset:
    return panel.withhold("post") if panel.has("post") else panel


def _blocked(cfg: RunConfig, kind: str, **options) -> BlockedDesign:
    if kind == "vs":
        options = {"use_feature_selection": cfg.use_feature_selection, "include_yhat": cfg.include_yhat,
                   "lasso_rule": cfg.lasso_rule, **options}
    elif kind == "fps":
        options = {"allocator": cfg.allocator, **options}
    elif kind == "fallback":
        options = {"mode": cfg.fallback_mode, "weight_rule": cfg.weight_rule, **options}
    return BlockedDesign(kind, kind, cfg.c_B, cfg.n_trees, options)


def _aux_partition(cfg: RunConfig):
    if not cfg.aux_partition:
        return None
    try:
        d = json.loads(Path(cfg.aux_partition).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"'aux_partition': cannot read {cfg.aux_partition}: {err}") from None
    return definition_from_dict(d.get("definition", d))


def _fallback_mode(cfg: RunConfig, panel: PanelDataset) -> str:
    if cfg.fallback_mode:
        return cfg.fallback_mode
    if cfg.aux_partition:
        return "auxiliary"
    return "single_pre" if panel.pre_periods else "zero_pre"


def _select_blocking(cfg: RunConfig, panel: PanelDataset, seed: int):
    """Resolve ``strategy=auto`` for blocking; returns (winner kind, scores)."""
    pre = panel.pre_periods
    candidates = {"vs": _blocked(cfg, "vs"), "fps": _blocked(cfg, "fps")}
    if len(pre) >= 3:
        held = pre[-1]
        early = panel.withhold(held)
        parts = {k: d.partition(early, derive(seed, 0)) for k, d in candidates.items()}
        if cfg.tradeoff_weight is not None:
            scores, _ = tradeoff_select_pre3(parts, panel, cfg.tradeoff_draws, cfg.tradeoff_weight,
                                             derive(seed, 1), target=held)
        else:
            scores = compare_on_pre3(parts, panel, seed=derive(seed, 1), target=held)
    elif len(pre) == 2:
        builders = {k: d.partition for k, d in candidates.items()}
        scores = compare_by_cv(builders, panel, cfg.n_repeats, derive(seed, 2), cfg.c_B)
    else:
        return "fallback", []
    return scores[0].strategy, scores


def _partition_summary(part: Partition) -> list[list]:
    rows = [["b", part.b], ["c_B", part.c_B], ["sizes", " ".join(str(int(s)) for s in part.sizes)]]
    for k, v in sorted(part.info.items()):
        if k == "strategy":
            continue
        rows.append([k, json.dumps(v) if not isinstance(v, str) else v])
    return rows


def cmd_design(cfg: RunConfig, out: Path, threads: int) -> list[str]:
    panel = load_data(cfg)
    dpanel = _design_panel(panel)
    seed = cfg.seed
    strategy = cfg.strategy
    scores: list[StrategyScore] = []
    if strategy == "auto":
        strategy, scores = _select_blocking(cfg, dpanel, derive(seed, SELECT))
        log.info("auto strategy selected %s", strategy)
    ids = panel.unit_ids
    files = ["assignment.csv", "partition.json", "report.csv", "report.md"]
    summary: list[list] = [["strategy", strategy]]
    if strategy in ("vs", "fps", "fallback"):
        options = {}
        if strategy == "fallback":
            options = {"mode": _fallback_mode(cfg, dpanel), "aux_partition": _aux_partition(cfg)}
        part = _blocked(cfg, strategy, **options).partition(dpanel, derive(seed, FIT))
        assignment = assign_within_blocks(part, derive(seed, ASSIGN))
        _json_dump(part.to_dict(ids), out / "partition.json")
        summary += _partition_summary(part)
    elif strategy == "matching":
        fitted = PairedDesign("matching", cfg.match_strategy, cfg.n_trees, cfg.odd_policy).fit(dpanel, derive(seed, FIT))
        assignment = fitted.draw(derive(seed, ASSIGN))
        pairs = [[ids[a], ids[b]] for a, b in _pairs_of(assignment)]
        _json_dump({"kind": "pairs", "strategy": cfg.match_strategy, "pairs": pairs,
                    "holdout": assignment.method.get("holdout")}, out / "partition.json")
        summary += [["pairs", len(pairs)], ["match_strategy", cfg.match_strategy]]
    else:
        design = RerandomizedDesign("rerandomization", cfg.match_strategy, cfg.rerandomization_mode,
                                    cfg.R, cfg.alpha, cfg.max_draws, cfg.n_trees)
        fitted = design.fit(dpanel, derive(seed, FIT))
        assignment, stats = rerandomize(fitted.criterion, fitted.mode, fitted.R, fitted.alpha,
                                        fitted.max_draws, derive(seed, ASSIGN))
        stats.to_csv(out / "balance.csv")
        files.append("balance.csv")
        _json_dump({"kind": "rerandomized", **assignment.method}, out / "partition.json")
        summary += [[k, json.dumps(v)] for k, v in assignment.method.items() if k != "kind"]
    assignment.to_csv(out / "assignment.csv", ids)
    if scores:
        write_scores(scores, out / "report.csv")
    else:
        write_csv(out / "report.csv", ["key", "value"], summary)
    md = "# Design\n\n" + markdown_table(["key", "value"], summary)
    if scores:
        md += "\n## Strategy selection\n\n" + markdown_table(
            ["strategy", "criterion", "score", "rank"], [[s.strategy, s.criterion, s.value, s.rank] for s in scores]
        )
    (out / "report.md").write_text(md)
    return files


def _pairs_of(assignment):
    groups = {}
    for i, g in enumerate(assignment.group_of):
        if not assignment.misfit[i]:
            groups.setdefault(int(g), []).append(i)
    return [tuple(v) for _, v in sorted(groups.items())]


def _methods(cfg: RunConfig, default) -> list[MethodConfig]:
    return cfg.methods if cfg.methods else [MethodConfig(name=k, kind=k) for k in default]


def _make(cfg: RunConfig, m: MethodConfig):
    options = dict(m.options)
    if m.kind in ("vs", "fps", "fallback"):
        d = _blocked(cfg, m.kind, **options)
        return BlockedDesign(m.name, d.strategy, d.c_B, d.n_trees, d.options)
    if m.kind in ("matching", "rerandomization"):
        options.setdefault("strategy", cfg.match_strategy)
        if m.kind == "rerandomization":
            options.setdefault("mode", cfg.rerandomization_mode)
            options.setdefault("R", cfg.R)
            options.setdefault("alpha", cfg.alpha)
            options.setdefault("max_draws", cfg.max_draws)
        else:
            options.setdefault("odd", cfg.odd_policy)
    try:
        return make_design(m.name, m.kind, cfg.c_B, cfg.n_trees, **options)
    except (KeyError, TypeError) as err:
        raise ConfigError(f"method {m.name!r}: bad options ({err})") from None


def cmd_simulate(cfg: RunConfig, out: Path, threads: int) -> list[str]:
    panel = load_data(cfg)
    designs = [_make(cfg, m) for m in _methods(cfg, ["complete", "vs", "fps"])]
    meta = spec_metadata_from(cfg)
    report = run_placebo_sims(panel, designs, cfg.n_reps, derive(cfg.seed, SIM), cfg.eval_period,
                              threads=threads, metadata=meta)
    report.to_csv(out / "report.csv")
    report.to_markdown(out / "report.md")
    return ["report.csv", "report.md"]


def spec_metadata_from(cfg: RunConfig) -> dict:
    if cfg.synthetic is None:
        return {}
    s = cfg.synthetic.model_dump()
    s["coefficients"] = tuple(s["coefficients"]) if s["coefficients"] is not None else None
    return spec_metadata(SyntheticDGPSpec(**s, seed=derive(cfg.seed, DATA)))


def cmd_compare(cfg: RunConfig, out: Path, threads: int) -> list[str]:
    panel = load_data(cfg)
    dpanel = _design_panel(panel)
    designs = [_make(cfg, m) for m in _methods(cfg, ["vs", "fps"])]
    for d in designs:
        if not hasattr(d, "partition"):
            raise ConfigError(f"method {d.name!r} does not produce a partition and cannot be compared")
    seed = derive(cfg.seed, SELECT)
    pre = dpanel.pre_periods
    if len(pre) >= 3:
        held = pre[-1]
        early = dpanel.withhold(held)
        parts = {d.name: d.partition(early, derive(seed, 0)) for d in designs}
        if cfg.tradeoff_weight is not None:
            scores, _ = tradeoff_select_pre3(parts, dpanel, cfg.tradeoff_draws, cfg.tradeoff_weight,
                                             derive(seed, 1), target=held)
        else:
            scores = compare_on_pre3(parts, dpanel, seed=derive(seed, 1), target=held)
    else:
        scores = compare_by_cv({d.name: d.partition for d in designs}, dpanel, cfg.n_repeats,
                               derive(seed, 2), cfg.c_B)
    write_scores(scores, out / "report.csv", out / "report.md")
    return ["report.csv", "report.md"]


RUNNERS = {"design": cmd_design, "simulate": cmd_simulate, "compare": cmd_compare}


def run(command: str, cfg: RunConfig, out, threads: int | None = None) -> dict:
    """Execute a command, write its files and the manifest into ``out``;
    returns the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.input:
        cfg = cfg.model_copy(update={"input": str(Path(cfg.input).resolve())})
    files = RUNNERS[command](cfg, out, threads or os.cpu_count() or 1)
    manifest = {
        "artifact": "mlblock",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "seed_streams": {"data": DATA, "fit": FIT, "assign": ASSIGN, "simulate": SIM, "select": SELECT},
        "config": cfg.resolved(),
        "input_sha256": _sha256(cfg.input) if cfg.input else None,
        "outputs": {f: _sha256(out / f) for f in sorted(files)},
    }
    _json_dump(manifest, out / "manifest.json")
    return manifest


def replay(manifest_path, out, threads: int | None = None) -> tuple[dict, list[str]]:
    """Re-run a manifest; returns (new manifest, names of files that differ)."""
    try:
        old = json.loads(Path(manifest_path).read_text())
        command, config = old["command"], old["config"]
    except (OSError, json.JSONDecodeError, KeyError) as err:
        raise ConfigError(f"unreadable manifest {manifest_path}: {err}") from None
    cfg = parse_config(config)
    if old.get("input_sha256") and cfg.input and _sha256(cfg.input) != old["input_sha256"]:
        raise DataError(f"input {cfg.input} changed since the manifest was written")
    new = run(command, cfg, out, threads)
    differ = sorted(set(old["outputs"]) ^ set(new["outputs"])) + [
        f for f in sorted(set(old["outputs"]) & set(new["outputs"])) if old["outputs"][f] != new["outputs"][f]
    ]
    return new, differ


def _config_help() -> str:
    lines = ["config keys (defaults):"]
    for key, f in RunConfig.model_fields.items():
        default = "required" if f.is_required() else repr(f.default) if f.default_factory is None else "[]"
        lines.append(f"  {key} = {default}")
    return "\n".join(lines)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mlblock", description="ML-assisted blocked experimental designs.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [
        ("design", "build a design on the pre-period data and write the assignment"),
        ("simulate", "placebo Monte Carlo comparison of designs"),
        ("compare", "rank blocking strategies by held-out prediction"),
    ]:
        c = sub.add_parser(name, help=text, description=RunConfig.__doc__, epilog=_config_help(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        c.add_argument("--config", required=True, help="JSON run configuration (unknown keys are rejected)")
        c.add_argument("--out", default=".", help="output directory (default: current directory)")
        c.add_argument("--seed", type=int, default=None, help="master seed, overrides the config value")
        c.add_argument("--threads", type=int, default=None, help="worker threads (default: available cores)")
    r = sub.add_parser("replay", help="re-run a manifest.json and check outputs match byte for byte")
    r.add_argument("manifest")
    r.add_argument("--out", default=".", help="output directory")
    r.add_argument("--threads", type=int, default=None)
    return p


def _exit_code(err: BaseException) -> int:
    if isinstance(err, FoldError) and err.__cause__ is not None:
        return _exit_code(err.__cause__)
    if isinstance(err, ConfigError):
        return 1
    if isinstance(err, DataError):
        return 2
    return 3


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="mlblock: %(message)s", stream=sys.stderr)
    try:
        if args.command == "replay":
            _, differ = replay(args.manifest, args.out, args.threads)
            if differ:
                print(f"mlblock: replay differs in {', '.join(differ)}", file=sys.stderr)
                return 3
            print("mlblock: replay reproduced all outputs", file=sys.stderr)
            return 0
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = parse_config({**cfg.model_dump(mode="json"), "seed": args.seed})
        base = Path(args.config).resolve().parent
        for key in ("input", "aux_partition"):
            value = getattr(cfg, key)
            if value and not Path(value).is_absolute():
                cfg = cfg.model_copy(update={key: str(base / value)})
        run(args.command, cfg, args.out, args.threads)
        return 0
    except MlblockError as err:
        print(f"mlblock: error: {err}", file=sys.stderr)
        return _exit_code(err)


if __name__ == "__main__":
    sys.exit(main())
