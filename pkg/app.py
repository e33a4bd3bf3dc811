"""
Decision-tree rule extraction and explanation for network-flow classifiers.

Turns a threshold decision tree into prime-implicant rules through Map, Combine and
Merge discretisation and on-set minimisation, explains single flows with
those rules, and checks the rule classifier against the tree on flow CSVs.

Stages hand JSON artifacts to each other through files or pipes:

    rules | discretize | compile | primes | explain
"""

import sys
import logging
import argparse
from typing import List, Optional

from src.config import LOG_LEVEL, OUTPUT_FORMATS, PipelineConfig, load_schema_config, resolve_budget, resolve_threads
from src.cubes import compile_rules
from src.discretizer import space_artifact
from src.errors import MnmError, ValidationError, exit_code_for
from src.evaluator import evaluate, load_flows
from src.explainer import explain_batch, explain_instance
from src.pipeline import (
    check_label,
    compute_primes,
    discretize,
    dnf_artifact,
    parse_flow,
    primes_artifact,
    primes_for_tree,
    read_dnf,
    read_primes,
    read_rules,
    read_space,
    read_tree,
    render_dnf,
    render_rules,
    render_space,
    select_sides,
)
from src.primes import report_table
from src.tree import extract_rules
from src.utils import dump_json, setup_logging, write_text

logger = logging.getLogger(__name__)


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors surface as ValidationError (exit status 1)."""

    def error(self, message: str):
        raise ValidationError(f"{self.prog}: {message}")


def setup_parser() -> argparse.ArgumentParser:
    """Setup command-line argument parser.

    Returns:
        Configured argument parser.
    """
    common = CliParser(add_help=False)
    common.add_argument(
        "--format",
        choices=OUTPUT_FORMATS,
        default=None,
        help="Output format. Default: json for artifact stages, text for reports."
    )
    common.add_argument("--output", type=str, default=None, help="Write output here instead of standard output.")
    common.add_argument("--verbose", action="store_true", help="Log debug detail to standard error.")
    common.add_argument("--quiet", action="store_true", help="Only log errors.")

    budget = CliParser(add_help=False)
    budget.add_argument(
        "--budget",
        type=int,
        default=None,
        help="Largest feasible space enumerated exactly. Default: MNM_BUDGET or 10^8."
    )
    budget.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker cap. Default: MNM_THREADS or 1."
    )

    parser = CliParser(prog="mnm", description="Prime-implicant rules and explanations for decision-tree flow classifiers")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    rules = commands.add_parser("rules", parents=[common], help="Tree -> rule set")
    rules.add_argument("--tree", required=True, help="Tree document (JSON).")
    rules.set_defaults(handler=cmd_rules, default_format="json")

    disc = commands.add_parser("discretize", parents=[common], help="Rule set -> merged interval space")
    disc.add_argument("--rules", default="-", help="Ruleset artifact. Default: standard input.")
    disc.add_argument(
        "--combine",
        action="append",
        default=[],
        metavar="SPACE",
        help="Space artifact of another model whose thresholds are combined in; repeatable."
    )
    disc.add_argument("--label", default=None, help="Merge with respect to this label's rules only.")
    disc.set_defaults(handler=cmd_discretize, default_format="json")

    comp = commands.add_parser("compile", parents=[common], help="Space + rules -> DNF for one label")
    comp.add_argument("--space", default="-", help="Space artifact. Default: standard input.")
    comp.add_argument("--rules", default=None, help="Ruleset artifact; defaults to the rules carried by the space.")
    comp.add_argument("--label", required=True, help="Target class label.")
    comp.set_defaults(handler=cmd_compile, default_format="json")

    primes = commands.add_parser("primes", parents=[common, budget], help="DNF -> prime implicants of both sides")
    source = primes.add_mutually_exclusive_group()
    source.add_argument("--dnf", default=None, help="DNF artifact. Default: standard input.")
    source.add_argument("--tree", default=None, help="Run the whole chain from a tree document.")
    primes.add_argument("--label", default=None, help="Target class label (with --tree).")
    primes.add_argument("--verify", action="store_true", help="Check both prime sets against their formulas.")
    primes.add_argument("--minimal", action="store_true", help="Keep a minimum-cardinality cover (implies --verify).")
    primes.add_argument("--heuristic", action="store_true", help="Above budget, expand cubes to primes instead of failing.")
    primes.set_defaults(handler=cmd_primes, default_format="json")

    explain = commands.add_parser("explain", parents=[common, budget], help="Sufficient reasons for flows")
    explain.add_argument("--tree", required=True, help="Tree document (JSON).")
    explain.add_argument("--primes", default=None, help="Primes artifact. Default: standard input unless --label is given.")
    explain.add_argument("--label", default=None, help="Compute verified primes for this label from the tree.")
    flows = explain.add_mutually_exclusive_group(required=True)
    flows.add_argument("--flow", default=None, help='One flow as "name=value,name=value".')
    flows.add_argument("--csv", default=None, help="Flow CSV; every row is explained.")
    explain.add_argument("--schema", default=None, help="Flow schema config (JSON). Default: MNM_SCHEMA_PATH.")
    explain.set_defaults(handler=cmd_explain, default_format="text")

    evaluate_cmd = commands.add_parser("evaluate", parents=[common, budget], help="Tree vs prime classifier on a CSV")
    evaluate_cmd.add_argument("--tree", required=True, help="Tree document (JSON).")
    evaluate_cmd.add_argument("--csv", required=True, help="Flow CSV with a header row.")
    evaluate_cmd.add_argument("--primes", default=None, help="Primes artifact. Default: standard input unless --label is given.")
    evaluate_cmd.add_argument("--label", default=None, help="Compute verified primes for this label from the tree.")
    evaluate_cmd.add_argument("--schema", default=None, help="Flow schema config (JSON). Default: MNM_SCHEMA_PATH.")
    evaluate_cmd.add_argument("--label-column", default=None, help="Ground-truth column. Default: from the schema, else Label.")
    evaluate_cmd.set_defaults(handler=cmd_evaluate, default_format="text")

    report = commands.add_parser("report", parents=[common], help="Prime-implicant tables")
    report.add_argument("--primes", default="-", help="Primes artifact. Default: standard input.")
    report.add_argument("--side", choices=("positive", "negative", "both"), default="both", help="Which side to list. Default: both")
    report.set_defaults(handler=cmd_report, default_format="text")

    return parser


def _config(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        tree_path=getattr(args, "tree", None),
        space_path=getattr(args, "space", None),
        rules_path=getattr(args, "rules", None),
        primes_path=getattr(args, "primes", None),
        dataset_path=getattr(args, "csv", None),
        budget=resolve_budget(getattr(args, "budget", None)),
        threads=resolve_threads(getattr(args, "threads", None)),
        output_format=args.format or args.default_format,
    ).validate()


def _emit(args: argparse.Namespace, text: str) -> None:
    write_text(text, args.output)


def cmd_rules(args: argparse.Namespace, config: PipelineConfig) -> None:
    rules = extract_rules(read_tree(config.tree_path))
    _emit(args, dump_json(rules.to_document()) if config.output_format == "json" else render_rules(rules))


def cmd_discretize(args: argparse.Namespace, config: PipelineConfig) -> None:
    rules = read_rules(config.rules_path)
    others = [read_space(path)[0] for path in args.combine]
    space, kept = discretize(rules, others, args.label)
    if config.output_format == "json":
        _emit(args, dump_json(space_artifact(space, kept)))
    else:
        _emit(args, render_space(space))


def cmd_compile(args: argparse.Namespace, config: PipelineConfig) -> None:
    space, carried = read_space(config.space_path)
    rules = read_rules(config.rules_path) if config.rules_path else carried
    if rules is None:
        raise ValidationError("The space carries no rules; pass --rules")
    dnf = compile_rules(rules, space, check_label(args.label, rules.classes))
    _emit(args, dump_json(dnf_artifact(dnf, rules.classes)) if config.output_format == "json" else render_dnf(dnf))


def cmd_primes(args: argparse.Namespace, config: PipelineConfig) -> None:
    if args.tree:
        if not args.label:
            raise ValidationError("primes --tree needs --label")
        positive, negative = primes_for_tree(
            read_tree(args.tree), args.label, config.budget, config.threads, args.heuristic, args.minimal
        )
    else:
        if args.label:
            raise ValidationError("--label is only used with --tree; a DNF already names its label")
        dnf, classes = read_dnf(args.dnf)
        positive, negative = compute_primes(
            dnf, classes, config.budget, config.threads,
            heuristic=args.heuristic, verify=args.verify, minimal=args.minimal,
        )
    if config.output_format == "json":
        _emit(args, dump_json(primes_artifact(positive, negative)))
    else:
        _emit(args, "\n".join(report_table(p) for p in (positive, negative)))


def _load_prime_pair(args: argparse.Namespace, config: PipelineConfig, tree):
    if args.label:
        if args.primes:
            raise ValidationError("Give either --primes or --label, not both")
        return primes_for_tree(tree, args.label, config.budget, config.threads)
    return read_primes(args.primes or "-")


def cmd_explain(args: argparse.Namespace, config: PipelineConfig) -> None:
    tree = read_tree(config.tree_path)
    positive, negative = _load_prime_pair(args, config, tree)
    if args.flow is not None:
        explanations = [explain_instance(parse_flow(args.flow), tree, positive, negative)]
    else:
        data = load_flows(args.csv, load_schema_config(args.schema), required=tree.tested_features())
        explanations = explain_batch(data.rows(), tree, positive, negative, config.threads)

    if config.output_format == "json":
        documents = [e.to_document() for e in explanations]
        _emit(args, dump_json(documents[0] if args.flow is not None else documents))
    else:
        _emit(args, "\n".join(e.render_text() for e in explanations))


def cmd_evaluate(args: argparse.Namespace, config: PipelineConfig) -> None:
    tree = read_tree(config.tree_path)
    positive, negative = _load_prime_pair(args, config, tree)
    schema = load_schema_config(args.schema)
    if args.label_column:
        schema.label_column = args.label_column
    data = load_flows(config.dataset_path, schema, required=tree.tested_features())
    report = evaluate(tree, positive, negative, data)
    _emit(args, dump_json(report.to_document()) if config.output_format == "json" else report.render_text())


def cmd_report(args: argparse.Namespace, config: PipelineConfig) -> None:
    positive, negative = read_primes(config.primes_path)
    sides = select_sides(positive, negative, args.side)
    if config.output_format == "json":
        _emit(args, dump_json(primes_artifact(positive, negative)))
    else:
        _emit(args, "\n".join(report_table(p) for p in sides))


def run(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand.

    Args:
        argv: Arguments without the program name; defaults to sys.argv[1:].

    Returns:
        0 on success, 1 on validation or equivalence errors, 2 on capacity errors.
    """
    parser = setup_parser()
    try:
        args = parser.parse_args(argv)
        level = "DEBUG" if args.verbose else "ERROR" if args.quiet else LOG_LEVEL
        setup_logging(level)
        config = _config(args)
        args.handler(args, config)
        return 0
    except MnmError as e:
        if not logging.getLogger().handlers:
            setup_logging(LOG_LEVEL)
        logger.error(f"{type(e).__name__}: {e}")
        return exit_code_for(e)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0
    except Exception as e:
        logger.exception(f"Unexpected error: {str(e)}")
        return 1


def main():
    """Main application entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
