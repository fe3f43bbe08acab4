"""Command-line front end: ``qbnet <command> ...``."""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import __version__
from .bounds import (ChannelWeightTable, EpsilonTerms, InfeasibleConstraintError,
                     UnboundedConstraintError, corollary_bound, theorem2_bound)
from .entropy import SearchConfig
from .lower import HypergraphError, PackingLimitError, aggregated_rate, min_steiner_cut
from .netmodel import (NetworkError, Partition, PartitionDomainError, PartitionLimitError,
                       export_dot, load_network, partition_from_dict)
from .rng import child_seed, stream
from .simverify import (FidelityError, ProtocolError, QubitCapError, simulate_tree_extraction,
                        verify_theorem1_trace)
from .suites import SUITES

BUILTIN_NETWORKS = ("star", "chain", "three_families")
BUILTIN_ALIASES = {"fig1": "three_families"}


class UsageError(ValueError):
    pass


class VerificationFailure(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    network: str | None = None
    family: str | None = None
    all_families: bool = False
    strategy: str = "exhaustive"
    method: str = "auto"
    copies: str | None = None
    epsilon: float | None = None
    b: float | None = None
    g: float | None = None
    suite: str = "all"
    script: str | None = None
    partition: str | None = None
    seed: int = 0
    threads: int = 1
    report: str | None = None
    output: str | None = None
    verbose: bool = False
    inputs: dict[str, bytes] = field(default_factory=dict)

    def validate(self) -> None:
        given = [x is not None for x in (self.epsilon, self.b, self.g)]
        if any(given) and not all(given):
            raise UsageError("--epsilon, --b and --g must be given together")
        if self.family and self.all_families:
            raise UsageError("--family and --all-families are exclusive")
        if self.threads < 1:
            raise UsageError("--threads must be at least 1")


def _read_input(cfg: RunConfig, key: str, ref: str) -> bytes:
    name = BUILTIN_ALIASES.get(ref, ref)
    if name in BUILTIN_NETWORKS and key == "network" and not Path(ref).exists():
        data = resources.files("qbnet").joinpath("data", f"{name}.json").read_bytes()
    else:
        try:
            data = Path(ref).read_bytes()
        except OSError as exc:
            raise UsageError(f"cannot read {key} {ref!r}: {exc}") from exc
    cfg.inputs[key] = data
    return data


def _network(cfg: RunConfig):
    if cfg.network is None:
        raise UsageError("--network is required")
    return load_network(_read_input(cfg, "network", cfg.network))


def _json_input(cfg: RunConfig, key: str, ref: str):
    try:
        return json.loads(_read_input(cfg, key, ref))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{key} {ref!r} is not valid JSON: {exc}") from exc


def _families(cfg: RunConfig, net):
    if cfg.all_families or cfg.family is None:
        if not net.families:
            raise UsageError("network declares no families")
        return list(net.families)
    try:
        return [net.family(cfg.family)]
    except KeyError:
        raise UsageError(f"unknown family {cfg.family!r}") from None


def _copies(cfg: RunConfig, net):
    if cfg.copies is None:
        return None
    if cfg.copies.startswith("uniform:"):
        try:
            n = int(cfg.copies.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad copies spec {cfg.copies!r}") from None
        if n < 0:
            raise UsageError("copies must be non-negative")
        return {e.id: n for e in net.edges}
    doc = _json_input(cfg, "copies", cfg.copies)
    if not isinstance(doc, dict) or not all(isinstance(v, int) and v >= 0 for v in doc.values()):
        raise UsageError("copies file must map edge ids to non-negative integers")
    unknown = set(doc) - {e.id for e in net.edges}
    if unknown:
        raise UsageError(f"copies file names unknown edges {sorted(unknown)}")
    return doc


def _partition(cfg: RunConfig, net) -> Partition:
    if cfg.partition in (None, "discrete"):
        return Partition.discrete(net.vertices)
    if cfg.partition == "single":
        return Partition.single(net.vertices)
    return partition_from_dict(_json_input(cfg, "partition", cfg.partition))


def _weights(cfg: RunConfig, net) -> ChannelWeightTable:
    search = SearchConfig(seed=child_seed(cfg.seed, "channel-weights"))
    return ChannelWeightTable(net, search=search)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_bound_upper(cfg: RunConfig) -> tuple[dict, bool]:
    net = _network(cfg)
    weights = _weights(cfg, net)
    eps = EpsilonTerms(cfg.epsilon, cfg.b, cfg.g) if cfg.epsilon is not None else None
    out = []
    for fam in _families(cfg, net):
        if len(fam.members) < 2:
            out.append({"family": fam.id, "bound": None,
                        "note": "single-member family never constrains a bound"})
            continue
        cb = corollary_bound(net, fam, weights, cfg.strategy, eps_terms=eps,
                             seed=child_seed(cfg.seed, "partition-search"), threads=cfg.threads)
        rep = theorem2_bound(net, cb.partition, weights, eps_terms=eps, families=[fam])
        out.append({"family": fam.id, "bound": cb.value,
                    "partition": cb.partition.sorted_blocks(net.vertices),
                    "ties": [t.sorted_blocks(net.vertices) for t in cb.ties],
                    "report": rep.to_dict(net.vertices)})
    return {"strategy": cfg.strategy, "families": out,
            "weights_certified": weights.all_certified}, True


def cmd_bound_lower(cfg: RunConfig) -> tuple[dict, bool]:
    net = _network(cfg)
    copies = _copies(cfg, net)
    out = []
    for fam in _families(cfg, net):
        if len(fam.members) < 2:
            out.append({"family": fam.id, "ghz_count": None,
                        "note": "single-member family has no GHZ target"})
            continue
        res = aggregated_rate(net, fam, copies, cfg.method)
        doc = res.to_dict()
        doc["cut"] = min_steiner_cut(res.hypergraph, fam.members).to_dict()
        out.append(doc)
    return {"families": out}, True


def cmd_verify(cfg: RunConfig) -> tuple[dict, bool]:
    names = list(SUITES) if cfg.suite == "all" else [cfg.suite]
    out, ok = {}, True
    for name in names:
        results = SUITES[name](cfg.seed)
        out[name] = [r.to_dict() for r in results]
        ok &= all(r.ok for r in results)
    return {"suites": out, "ok": ok}, ok


def cmd_simulate(cfg: RunConfig) -> tuple[dict, bool]:
    net = _network(cfg)
    if cfg.script is not None:
        script = _json_input(cfg, "script", cfg.script)
        steps = script.get("steps") if isinstance(script, dict) else script
        if not isinstance(steps, list):
            raise UsageError("script must be a list of steps or an object with 'steps'")
        p = _partition(cfg, net)
        rep = verify_theorem1_trace(net, steps, p, _weights(cfg, net),
                                    seed=child_seed(cfg.seed, "trace"))
        return {"partition": p.sorted_blocks(net.vertices), "trace": rep.to_dict()}, rep.ok
    copies = _copies(cfg, net)
    rng = stream(cfg.seed, "tree-extraction")
    out = []
    for fam in _families(cfg, net):
        if len(fam.members) < 2:
            continue
        res = aggregated_rate(net, fam, copies, cfg.method)
        runs = []
        for tree in res.packing.trees:
            try:
                runs.append(simulate_tree_extraction(net, fam, tree, copies, rng).to_dict())
            except QubitCapError as exc:
                runs.append({"skipped": str(exc)})
        out.append({"family": fam.id, "ghz_count": res.ghz_count, "extractions": runs})
    return {"families": out}, True


def cmd_export_dot(cfg: RunConfig) -> tuple[str, bool]:
    net = _network(cfg)
    p = _partition(cfg, net) if cfg.partition is not None else None
    return export_dot(net, p), True


COMMANDS = {
    "bound-upper": cmd_bound_upper,
    "bound-lower": cmd_bound_lower,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "export-dot": cmd_export_dot,
}


def _digest(inputs: dict[str, bytes]) -> str:
    h = hashlib.sha256()
    for key in sorted(inputs):
        h.update(key.encode() + b"\0" + hashlib.sha256(inputs[key]).digest())
    return h.hexdigest()


def run(cfg: RunConfig) -> tuple[int, str]:
    """Execute one command; returns the exit status and the report text."""
    cfg.validate()
    result, ok = COMMANDS[cfg.command](cfg)
    if isinstance(result, str):
        text = result
    else:
        doc = {"tool": "qbnet", "version": __version__, "command": cfg.command,
               "seed": cfg.seed, "input_digest": _digest(cfg.inputs), "ok": ok,
               "result": result}
        text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    target = cfg.output or cfg.report
    if target:
        Path(target).write_text(text)
    return (0 if ok else 1), text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None,
                        help="worker cap (default: $QBNET_THREADS or 1)")
    common.add_argument("--report", help="write the report here instead of stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qbnet", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qbnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def net_args(p):
        p.add_argument("--network", required=True,
                       help=f"network JSON file or builtin name ({', '.join(BUILTIN_NETWORKS)})")

    def fam_args(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--family")
        g.add_argument("--all-families", action="store_true")

    p = sub.add_parser("bound-upper", parents=[common], help="partition upper bounds")
    net_args(p)
    fam_args(p)
    p.add_argument("--strategy", choices=["exhaustive", "local"], default="exhaustive")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--g", type=float)

    p = sub.add_parser("bound-lower", parents=[common], help="Steiner-tree packing rates")
    net_args(p)
    fam_args(p)
    p.add_argument("--copies", help="JSON file mapping edge ids to copies, or uniform:N")
    p.add_argument("--method", choices=["exact", "greedy", "auto"], default="auto")

    p = sub.add_parser("verify", parents=[common], help="randomized invariant suites")
    p.add_argument("--suite", choices=["entropic", "protocol", "all"], default="all")

    p = sub.add_parser("simulate", parents=[common],
                       help="state-vector tree extraction or scripted budget trace")
    net_args(p)
    fam_args(p)
    p.add_argument("--copies")
    p.add_argument("--method", choices=["exact", "greedy", "auto"], default="auto")
    p.add_argument("--script", help="JSON protocol script for the budget trace")
    p.add_argument("--partition", help="partition JSON file, 'discrete' or 'single'")

    p = sub.add_parser("export-dot", parents=[common], help="Graphviz rendering")
    net_args(p)
    p.add_argument("--partition")
    p.add_argument("--output", help="DOT output file")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    threads = args.threads
    if threads is None:
        env = os.environ.get("QBNET_THREADS")
        try:
            threads = int(env) if env else 1
        except ValueError:
            raise UsageError(f"QBNET_THREADS={env!r} is not an integer") from None
    fields = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__}
    fields["command"] = args.command
    fields["threads"] = threads
    return RunConfig(**fields)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        status, text = run(cfg)
    except (UsageError, NetworkError, PartitionDomainError, PartitionLimitError,
            InfeasibleConstraintError, UnboundedConstraintError, HypergraphError,
            PackingLimitError, ProtocolError, QubitCapError, KeyError) as exc:
        print(f"qbnet: error: {exc}", file=sys.stderr)
        return 2
    except (FidelityError, VerificationFailure) as exc:
        print(f"qbnet: verification failed: {exc}", file=sys.stderr)
        return 1
    if not (cfg.report or cfg.output):
        sys.stdout.write(text)
    if status:
        print("qbnet: verification failed", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
