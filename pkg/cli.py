#!/usr/bin/env python3
"""
CoordMech - Command Line
Single entry point for evaluation, dynamics, equilibria, bounds and sweeps

Subcommands:
  eval      per-job completion times, machine loads, feasibility
  psi       Psi_k of a multiset
  dynamics  best-response rounds from a given or random start (JSON trace)
  graph     Nash dynamics graph, DOT export, cycle certificate
  verify    replay an embedded improving-move cycle
  pne       enumerate PNE, PoA / PoS and per-PNE bound checks
  sweep     bound sweep and property sweeps over random instances
  gen       write a random instance file
  compare   all mechanisms side by side on one instance

Exit status: 0 success / verified, 1 verification failed, 2 usage or input error.
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analysis import bound_report, compare_mechanisms, random_instance, run_bound_sweep
from config_loader import CoordMechConfig, get_config, reload_config
from dynamics import (
    ORDERS,
    StateSpaceTooLarge,
    nash_dynamics_graph,
    random_assignment,
    run_rounds,
    to_dot,
    verify_cycle,
)
from instance_model import (
    Assignment,
    Instance,
    InstanceError,
    format_rational,
    format_state,
    load_assignment,
    load_instance,
    parse_state,
    save_instance,
    serialize_instance,
)
from policies import Mechanism, PolicyConfig, PolicyError, evaluate_state, render
from psi import PsiCapExceeded, PsiDomainError, psi, psi_bruteforce
from sweeps import SWEEPS, run_sweeps

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


# ============================================================================
# EMBEDDED SCENARIOS
# Machines 1..4 in the state labels are indices 0..3 here
# ============================================================================

SCENARIOS: Dict[str, Dict] = {
    'longestfirst-cycle': {
        'description': 'LongestFirst is not a potential game: 9-move improving cycle',
        'mechanism': Mechanism.LONGEST_FIRST,
        'p': 1,
        'jobs': 'ABC',
        'loads': [
            ['14', 'inf', '3', '7'],
            ['inf', '10', '9', '8'],
            ['5', 'inf', '10', '9'],
        ],
        'states': [
            '(C,B,A,)', '(C,,AB,)', '(C,,B,A)', '(C,,,AB)', '(AC,,,B)',
            '(A,,C,B)', '(,,AC,B)', '(,,A,BC)', '(,B,A,C)', '(C,B,A,)',
        ],
    },
    'randomized-cycle': {
        'description': 'Randomized is not a potential game: every move improves the expectation by 1',
        'mechanism': Mechanism.RANDOMIZED,
        'p': 1,
        'jobs': 'ABCDEFG',
        'loads': [
            ['80', 'inf', '2', '2'],
            ['inf', '171', '154', '76'],
            ['100', 'inf', '124', '10'],
            ['2', 'inf', 'inf', 'inf'],
            ['inf', '2', 'inf', 'inf'],
            ['inf', 'inf', '32', 'inf'],
            ['inf', 'inf', 'inf', '184'],
        ],
        'states': [
            '(CD,BE,AF,G)', '(CD,E,ABF,G)', '(CD,E,BF,AG)', '(CD,E,F,ABG)', '(ACD,E,F,BG)',
            '(AD,E,CF,BG)', '(D,E,ACF,BG)', '(D,E,AF,BCG)', '(D,BE,AF,CG)', '(CD,BE,AF,G)',
        ],
    },
    'bcoord-cycle': {
        'description': 'BCOORD with p=2 is not a potential game: 9-move improving cycle',
        'mechanism': Mechanism.BCOORD,
        'p': 2,
        'jobs': 'ABCDE',
        'loads': [
            ['4.0202', 'inf', '0.0745', '2.4447'],
            ['inf', '8.2481', '0.6302', '5.1781'],
            ['4.0741', 'inf', '0.3078', '2.4734'],
            ['inf', 'inf', '29.1331', 'inf'],
            ['inf', 'inf', 'inf', '2.7592'],
        ],
        'states': [
            '(C,B,AD,E)', '(C,,ABD,E)', '(C,,BD,AE)', '(C,,D,ABE)', '(AC,,D,BE)',
            '(A,,CD,BE)', '(,,ACD,BE)', '(,,AD,BCE)', '(,B,AD,CE)', '(C,B,AD,E)',
        ],
    },
}


class ScenarioError(ValueError):
    """Unknown scenario name"""


@dataclass(frozen=True)
class ScenarioBundle:
    name: str
    description: str
    instance: Instance
    job_names: Tuple[str, ...]
    labels: Tuple[str, ...]
    states: Tuple[Assignment, ...]
    policy: PolicyConfig


def load_scenario(name: str) -> ScenarioBundle:
    """Embedded instance, closed state sequence and policy"""
    if name not in SCENARIOS:
        raise ScenarioError(f"Unknown scenario '{name}' (expected one of {', '.join(SCENARIOS)})")
    data = SCENARIOS[name]
    inst = Instance.from_rows(data['loads'])
    names = tuple(data['jobs'])
    return ScenarioBundle(
        name=name,
        description=data['description'],
        instance=inst,
        job_names=names,
        labels=tuple(data['states']),
        states=tuple(parse_state(label, names, inst.m) for label in data['states']),
        policy=PolicyConfig(data['mechanism'], data['p']),
    )


# ============================================================================
# HELPERS
# ============================================================================

def default_job_names(n: int) -> List[str]:
    if n <= 26:
        return [chr(ord('A') + i) for i in range(n)]
    return [str(i) for i in range(n)]


def setup_logging(config: CoordMechConfig, level: Optional[str] = None):
    """Console and optional file handlers from the [logging] section"""
    level_name = (level or config.get_logging_setting('log_level', 'WARNING')).upper()
    handlers: List[logging.Handler] = []
    if config.get_logging_setting('log_to_console', True):
        handlers.append(logging.StreamHandler(sys.stderr))
    log_file = config.get_logging_setting('log_file')
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    if not handlers:
        handlers.append(logging.NullHandler())

    logging.basicConfig(
        level=getattr(logging, level_name, logging.WARNING),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def _emit_json(payload):
    print(json.dumps(payload, indent=2, default=str))


def _emit_table(frame: pd.DataFrame):
    if frame.empty:
        print("(no rows)")
    else:
        print(frame.to_string(index=False))


def _threads(args) -> int:
    value = getattr(args, 'threads', None)
    return value if value is not None else get_config().get_int('workers', 'threads', 1)


def _load_problem(args, need_policy: bool = True) -> Tuple[Instance, List[str], Optional[PolicyConfig]]:
    """Instance, job names and policy from --scenario or --instance/--policy/--p"""
    scenario = getattr(args, 'scenario', None)
    if scenario:
        bundle = load_scenario(scenario)
        inst, names = bundle.instance, list(bundle.job_names)
        cfg = bundle.policy
        if getattr(args, 'policy', None):
            cfg = PolicyConfig.for_instance(args.policy, inst.m, args.p)
        elif getattr(args, 'p', None):
            cfg = PolicyConfig(cfg.mechanism, args.p)
        return inst, names, cfg

    if not getattr(args, 'instance', None):
        raise InstanceError("Provide --instance PATH or --scenario NAME")
    inst = load_instance(args.instance)
    names = default_job_names(inst.n)
    cfg = None
    if need_policy:
        if not getattr(args, 'policy', None):
            raise PolicyError("Provide --policy")
        cfg = PolicyConfig.for_instance(args.policy, inst.m, args.p)
    return inst, names, cfg


def _load_state(args, inst: Instance, names: Sequence[str]) -> Assignment:
    if getattr(args, 'state', None):
        return parse_state(args.state, names, inst.m)
    if getattr(args, 'assignment', None):
        return load_assignment(args.assignment, inst)
    raise InstanceError("Provide --assignment PATH or --state LABEL")


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_eval(args) -> int:
    inst, names, cfg = _load_problem(args)
    a = _load_state(args, inst, names)
    result = evaluate_state(cfg, inst, a, names)

    if args.json:
        _emit_json(result)
    else:
        print(f"Policy: {cfg.label()}    State: {format_state(a, names, inst.m)}")
        frame = pd.DataFrame(result['jobs'])
        frame['load'] = [format_rational(Fraction(w)) for w in frame['load']]
        _emit_table(frame)
        print()
        print("Machine loads: " + ', '.join(str(format_rational(Fraction(w))) for w in result['machine_loads']))
        feasibility = result['feasibility']
        status = "✓ feasible" if feasibility['passed'] else f"⚠️  infeasible at {feasibility['violation']}"
        print(f"Feasibility: {status}")
    return EXIT_OK


def cmd_psi(args) -> int:
    elements = [Fraction(token.strip()) for token in args.set.split(',') if token.strip()]
    value = psi(args.k, elements)
    result = {'k': args.k, 'set': [str(e) for e in elements], 'psi': str(value), 'decimal': render(float(value))}
    if args.brute:
        result['bruteforce'] = str(psi_bruteforce(args.k, elements))

    if args.json:
        _emit_json(result)
    else:
        print(f"{value}")
        print(f"≈ {result['decimal']}")
        if args.brute:
            print(f"brute force: {result['bruteforce']}")
    return EXIT_OK


def cmd_dynamics(args) -> int:
    inst, names, cfg = _load_problem(args)
    seed = args.seed if args.seed is not None else get_config().get_int('sweep', 'seed', 1)
    rng = np.random.default_rng(seed)

    if args.init == 'random':
        start = random_assignment(inst, rng)
    elif args.init.startswith('('):
        start = parse_state(args.init, names, inst.m)
    else:
        start = load_assignment(args.init, inst)

    order = args.order
    if order is not None and order not in ORDERS:
        order = [int(token) for token in order.split(',')]

    trace = run_rounds(cfg, inst, start, order=order, max_rounds=args.max_rounds, seed=seed)
    payload = {'policy': cfg.to_dict(), **trace.to_dict()}
    payload['final_label'] = format_state(trace.final, names, inst.m)
    _emit_json(payload)
    return EXIT_OK


def cmd_graph(args) -> int:
    inst, names, cfg = _load_problem(args)
    ng = nash_dynamics_graph(cfg, inst, threads=_threads(args))

    if args.dot:
        with open(args.dot, 'w') as f:
            f.write(to_dot(ng, inst, names))
        logger.info(f"✓ DOT written to {args.dot}")

    payload = {'policy': cfg.to_dict(), **ng.summary()}
    if args.detect_cycles:
        certificate = ng.cycle_certificate(inst)
        if certificate:
            certificate['labels'] = [format_state(Assignment(tuple(s)), names, inst.m) for s in certificate['states']]
        payload['cycle_certificate'] = certificate
    _emit_json(payload)
    return EXIT_OK


def _verify_one(name: str) -> Dict:
    bundle = load_scenario(name)
    report = verify_cycle(bundle.policy, bundle.instance, bundle.states)
    report['scenario'] = name
    report['description'] = bundle.description
    report['labels'] = list(bundle.labels)
    report['states'] = [list(a.machine_of) for a in bundle.states]
    for step in report['steps']:
        if 'job' in step:
            step['job_name'] = bundle.job_names[step['job']]
    return report


def cmd_verify(args) -> int:
    names = list(SCENARIOS) if args.scenario == 'all' else [args.scenario]
    reports = [_verify_one(name) for name in names]

    if args.json:
        _emit_json(reports if len(reports) > 1 else reports[0])
    else:
        for report in reports:
            print("=" * 60)
            print(f"{report['scenario']}: {report['description']}")
            print("=" * 60)
            rows = []
            for step in report['steps']:
                rows.append({
                    'step': step['step'],
                    'from_state': report['labels'][step['step'] - 1],
                    'job': step.get('job_name', '?'),
                    'move': f"{step['from']}->{step['to']}" if 'to' in step else '-',
                    'old_key': render(float(step['old_key'])) if 'old_key' in step else '-',
                    'new_key': render(float(step['new_key'])) if 'new_key' in step else '-',
                    'improvement': str(step['improvement']) if 'improvement' in step else '-',
                    'ok': step['single_mover'] and step['improving'],
                })
            _emit_table(pd.DataFrame(rows))
            closed = "closed" if report['closed'] else "NOT closed"
            print(f"{'✓' if report['passed'] else '⚠️ '} {closed}, {'all steps improving' if report['passed'] else 'verification failed'}\n")

    return EXIT_OK if all(r['passed'] for r in reports) else EXIT_FAILED


def cmd_pne(args) -> int:
    inst, names, cfg = _load_problem(args)
    report = bound_report(cfg, inst, threads=_threads(args))
    payload = report.to_dict()

    if args.report:
        with open(args.report, 'w') as f:
            json.dump(payload, f, indent=2, default=str)
        logger.info(f"✓ Report written to {args.report}")

    if args.json:
        _emit_json(payload)
    else:
        print(f"Policy: {cfg.label()}    OPT = {report.optimum} "
              f"at {format_state(report.optimum_assignment, names, inst.m)}")
        if report.status != 'ok':
            print(report.status)
        else:
            frame = report.to_frame()
            frame['state'] = [format_state(Assignment(row['state']), names, inst.m) for row in report.rows]
            _emit_table(frame)
            print(f"\nPoA = {render(report.poa)}    PoS = {render(report.pos)}")
            if report.min_potential_ratio is not None:
                print(f"Minimum-potential PNE ratio = {render(report.min_potential_ratio)} "
                      f"(bound {render(report.pos_bound)})")
        print("✓ all bound checks passed" if report.passed else "⚠️  bound check failed")

    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_sweep(args) -> int:
    checks = [c.strip() for c in args.checks.split(',') if c.strip()]
    unknown = [c for c in checks if c != 'bounds' and c not in SWEEPS]
    if unknown:
        raise ValueError(f"Unknown checks {unknown} (expected bounds, {', '.join(SWEEPS)})")

    payload: Dict = {}
    passed = True

    if 'bounds' in checks:
        policies = [Mechanism.parse(p) for p in args.policies.split(',') if p.strip()]
        p_values = [int(p) for p in args.p_values.split(',')] if args.p_values else None
        _, summary = run_bound_sweep(policies, trials=args.trials, seed=args.seed, n_max=args.n_max,
                                     m_max=args.m_max, p_values=p_values, threads=_threads(args))
        payload['bounds'] = summary.to_dict(orient='records')
        passed = passed and bool(summary['passed'].all())

    others = [c for c in checks if c != 'bounds']
    if others:
        results = run_sweeps(others, trials=args.trials, seed=args.seed)
        payload['checks'] = results
        passed = passed and all(r['passed'] for r in results)

    if args.json:
        _emit_json({'passed': passed, **payload})
    else:
        if 'bounds' in payload:
            print("Bound checks")
            _emit_table(pd.DataFrame(payload['bounds']))
            print()
        if 'checks' in payload:
            print("Property checks")
            _emit_table(pd.DataFrame([{k: v for k, v in r.items() if k != 'examples'} for r in payload['checks']]))
            print()
        print("✓ all checks passed" if passed else "⚠️  some checks failed")

    return EXIT_OK if passed else EXIT_FAILED


def cmd_gen(args) -> int:
    config = get_config()
    inst = random_instance(
        args.n, args.m, args.seed,
        load_min=args.load_min or config.get('sweep', 'load_min', '1'),
        load_max=args.load_max or config.get('sweep', 'load_max', '20'),
        max_denominator=args.max_denominator or config.get_int('sweep', 'max_denominator', 4),
        inf_probability=args.inf_probability if args.inf_probability is not None
        else config.get_float('sweep', 'inf_probability', 0.2),
    )
    if args.out:
        save_instance(inst, args.out)
    else:
        sys.stdout.write(serialize_instance(inst))
    return EXIT_OK


def cmd_compare(args) -> int:
    inst, _, _ = _load_problem(args, need_policy=False)
    p = args.p if args.p is not None else PolicyConfig.for_instance(Mechanism.CCOORD, inst.m).p
    frame = compare_mechanisms(inst, p, threads=_threads(args))
    if args.json:
        _emit_json(frame.to_dict(orient='records'))
    else:
        _emit_table(frame)
    return EXIT_OK


# ============================================================================
# PARSER
# ============================================================================

def _common_options() -> argparse.ArgumentParser:
    # SUPPRESS lets the flags appear before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--json', action='store_true', default=argparse.SUPPRESS, help='JSON on stdout')
    common.add_argument('--config', default=argparse.SUPPRESS, help='config file (default coordmech_config.txt)')
    common.add_argument('--threads', type=int, default=argparse.SUPPRESS, help='worker processes for state scans')
    common.add_argument('--log-level', default=argparse.SUPPRESS,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'])
    return common


def _problem_options(parser: argparse.ArgumentParser, scenario: bool = True):
    parser.add_argument('--instance', help='instance JSON file')
    if scenario:
        parser.add_argument('--scenario', choices=list(SCENARIOS), help='embedded scenario instead of --instance')
    parser.add_argument('--policy', help='makespan, shortestfirst, longestfirst, randomized, acoord, bcoord, ccoord')
    parser.add_argument('--p', type=int, help='mechanism parameter (default from config, auto = ceil(log2 m))')


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog='coordmech',
        description='Coordination mechanisms for selfish scheduling on unrelated machines',
        parents=[common],
    )
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')

    p_eval = sub.add_parser('eval', parents=[common], help='completion times and feasibility of one state')
    _problem_options(p_eval)
    p_eval.add_argument('--assignment', help='assignment JSON file')
    p_eval.add_argument('--state', help='state label, e.g. "(C,B,AD,E)"')
    p_eval.set_defaults(handler=cmd_eval)

    p_psi = sub.add_parser('psi', parents=[common], help='evaluate Psi_k on a multiset')
    p_psi.add_argument('--set', required=True, help='comma separated rationals, e.g. 1,2,3/2')
    p_psi.add_argument('--k', type=int, required=True)
    p_psi.add_argument('--brute', action='store_true', help='also run the brute-force oracle')
    p_psi.set_defaults(handler=cmd_psi)

    p_dyn = sub.add_parser('dynamics', parents=[common], help='best-response rounds (JSON trace)')
    _problem_options(p_dyn)
    p_dyn.add_argument('--init', default='random', help='random, an assignment file, or a state label')
    p_dyn.add_argument('--seed', type=int, default=None, help='seed for --init random and --order random (default [sweep] seed)')
    p_dyn.add_argument('--order', default=None, help=f"{', '.join(ORDERS)} or a permutation like 2,0,1")
    p_dyn.add_argument('--max-rounds', type=int, default=None)
    p_dyn.set_defaults(handler=cmd_dynamics)

    p_graph = sub.add_parser('graph', parents=[common], help='Nash dynamics graph')
    _problem_options(p_graph)
    p_graph.add_argument('--dot', help='write DOT to this path')
    p_graph.add_argument('--detect-cycles', action='store_true', help='include a cycle certificate')
    p_graph.set_defaults(handler=cmd_graph)

    p_verify = sub.add_parser('verify', parents=[common], help='replay an embedded improving cycle')
    p_verify.add_argument('--scenario', required=True, choices=list(SCENARIOS) + ['all'])
    p_verify.set_defaults(handler=cmd_verify)

    p_pne = sub.add_parser('pne', parents=[common], help='PNE, PoA / PoS and bound checks')
    _problem_options(p_pne)
    p_pne.add_argument('--report', help='write the bound report JSON to this path')
    p_pne.set_defaults(handler=cmd_pne)

    p_sweep = sub.add_parser('sweep', parents=[common], help='random-instance sweeps')
    p_sweep.add_argument('--checks', default='bounds', help=f"bounds,{','.join(SWEEPS)}")
    p_sweep.add_argument('--policies', default='acoord,bcoord,ccoord')
    p_sweep.add_argument('--trials', type=int, default=None)
    p_sweep.add_argument('--seed', type=int, default=None)
    p_sweep.add_argument('--n-max', type=int, default=None, help='largest job count (bounds check only)')
    p_sweep.add_argument('--m-max', type=int, default=None, help='largest machine count (bounds check only)')
    p_sweep.add_argument('--p-values', default=None, help='e.g. 1,2,3')
    p_sweep.set_defaults(handler=cmd_sweep)

    p_gen = sub.add_parser('gen', parents=[common], help='random instance file')
    p_gen.add_argument('--n', type=int, required=True)
    p_gen.add_argument('--m', type=int, required=True)
    p_gen.add_argument('--seed', type=int, default=None)
    p_gen.add_argument('--inf-probability', type=float, default=None)
    p_gen.add_argument('--load-min', default=None)
    p_gen.add_argument('--load-max', default=None)
    p_gen.add_argument('--max-denominator', type=int, default=None)
    p_gen.add_argument('--out', help='output path (stdout when omitted)')
    p_gen.set_defaults(handler=cmd_gen)

    p_cmp = sub.add_parser('compare', parents=[common], help='compare all mechanisms on one instance')
    _problem_options(p_cmp)
    p_cmp.set_defaults(handler=cmd_compare)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)

    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    if not getattr(args, 'command', None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    args.json = getattr(args, 'json', False)
    args.threads = getattr(args, 'threads', None)
    config = reload_config(args.config) if getattr(args, 'config', None) else get_config()
    setup_logging(config, getattr(args, 'log_level', None))

    try:
        return args.handler(args)
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename}", file=sys.stderr)
    except StateSpaceTooLarge as e:
        print(f"error: state space too large: {e}", file=sys.stderr)
    except PsiCapExceeded as e:
        print(f"error: brute-force cap exceeded: {e}", file=sys.stderr)
    except InstanceError as e:
        print(f"error: invalid instance input: {e}", file=sys.stderr)
    except (PolicyError, PsiDomainError, ScenarioError) as e:
        print(f"error: {e}", file=sys.stderr)
    except ValueError as e:
        print(f"error: invalid argument: {e}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
