"""
Command line harness: select a catalog case, bind its parameters, run the
checks of a verification suite and report.

    pencilforge verify-deformation --case N5 --eta12 1 --eta22 1 --F1 "u1" --F2 "1"
    pencilforge invariants --case T3 --eta12 1 --eta22 1 --F2 "u1^2"
    pencilforge lift-demo

Exit codes: 0 when every check passed, 1 when one failed, 2 on invalid input.
"""
import argparse
import cmath
import json
import random
import sys
from functools import lru_cache
from pathlib import Path
from typing import Optional, Callable, Dict, List, Sequence

from sympy import Expr, Rational, Symbol, sympify

from pencilforge.models import VerificationReport
from pencilforge.services.config import config
from pencilforge.services.verification import VerificationRun, Outcome, CheckSkipped
from pencilforge.services.util import PencilForgeError
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.jetspace import JetSpace, LocalFunctional
from pencilforge.services.util.localops import is_novikov, is_invariant_form
from pencilforge.services.util.brackets import (
    schouten_bracket,
    is_poisson_pencil,
    cocycle_check_d1d2
)
from pencilforge.services.util.miura import MiuraMap, pushforward_miura
from pencilforge.services.util.invariants import (
    ROOT_ORDER,
    dispersive_symbol_det,
    expand_roots,
    closed_form_invariants,
    residue_invariant,
    n4_residue_variant,
    numeric_value
)
from pencilforge.services.util.catalog import (
    CASE_IDS,
    CatalogCase,
    case_data,
    list_cases,
    deformation_field,
    deformed_pencil,
    degenerate_limit_residual,
    truncated_pencil,
    reduction,
    firstorder_family
)
from pencilforge.services.util.lift import (
    TangentLift,
    lift_operator,
    hamiltonian_lift_residual,
    lifted_bracket_matches,
    metric_routes_agree,
    lifted_determinant_identity,
    verify_lift_schouten,
    scalar_lift_demo,
    lift_preserves_poisson
)
from pencilforge.services.util.metadata import ReportMetadata
from pencilforge.services.util.parser import parse_expression, format_expression
from pencilforge.services.util.logutil import LoggingUtil

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)

RANDOM_TRIALS = config.section('pencilforge').get_int('random_trials', 3)

COMMANDS = (
    "verify-dispersionless",
    "verify-deformation",
    "verify-truncated",
    "verify-firstorder",
    "invariants",
    "verify-lift",
    "lift-demo",
    "list-cases",
)

FUNCTION_NAMES = ("f", "h", "F1", "F2", "F3", "F4")

# evaluation point of the numeric cross-check
ORACLE_POINT = {"u1": 2, "u2": 3, "eta12": 1, "eta22": 1}
ORACLE_TOLERANCE = 1e-9

# sample Hamiltonian densities and 1-forms of the lift checks
SAMPLE_DENSITIES = ("u1^2*u2/2", "u2^3/6", "u1*u2_x^2/2")
SAMPLE_FORMS = (("u2", "u1"), ("u1*u1_x", "u2_x"), ("u1^2", "u1*u2_xx"))


class UsageError(PencilForgeError):
    """Flags that do not fit the selected command or case."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pencilforge",
        description="Verify Poisson pencils of hydrodynamic type, their deformations, invariants and lifts."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument("--json", metavar="PATH", help="write the report as JSON to PATH")
        sub.add_argument("--parallel", action="store_true", help="run independent checks in worker threads")
        if command == "list-cases":
            sub.add_argument("--kappa", default="1", help="kappa of the N6 row (default 1)")
            continue
        if command == "lift-demo":
            sub.add_argument("--f", dest="f", help="the function f(u) of the scalar example, e.g. 'u'")
            continue
        sub.add_argument("--case", required=True, type=str.upper, choices=CASE_IDS)
        sub.add_argument("--kappa", help="rational kappa of N6")
        for slot in ("eta11", "eta12", "eta22"):
            sub.add_argument(f"--{slot}", help="rational value or 'sym'")
        sub.add_argument("--dump", action="store_true", help="print the operators in text form")
        if command in ("verify-deformation", "invariants"):
            for k in range(1, 5):
                sub.add_argument(f"--F{k}", help=f"functional parameter F{k}(u1)")
        if command == "verify-truncated":
            sub.add_argument("--f", dest="f", help="function f(u1) of the truncated structure")
            sub.add_argument("--h", dest="h", help="function h(u1) of the truncated structure")
        if command == "verify-firstorder":
            sub.add_argument(
                "--set", action="append", default=[], metavar="KEY=EXPR",
                help="closed-form data of the first order family, e.g. --set H=u1*u2"
            )
        if command == "verify-lift":
            sub.add_argument("--deformed", action="store_true", help="also lift the second order deformation")
        if command in ("verify-deformation", "invariants"):
            sub.add_argument("--random", action="store_true", help="seeded random rational instantiations")
            sub.add_argument("--seed", type=int, help="seed of the random instantiations")
    return parser


def _rational(text: str, what: str) -> Rational:
    try:
        value = sympify(text, rational=True)
    except Exception:
        raise UsageError(f"{what} must be a rational number, not '{text}'")
    if not value.is_Rational:
        raise UsageError(f"{what} must be a rational number, not '{text}'")
    return value


def _parameters(args: argparse.Namespace) -> Dict[str, str]:
    """Flags as recorded in the report, unset ones left out."""
    names = ("kappa", "eta11", "eta12", "eta22", "F1", "F2", "F3", "F4", "f", "h")
    recorded = {name: str(getattr(args, name)) for name in names if getattr(args, name, None) is not None}
    for item in getattr(args, "set", None) or []:
        key, _, value = item.partition("=")
        recorded[f"set.{key.strip()}"] = value.strip()
    return recorded


def select_case(args: argparse.Namespace) -> CatalogCase:
    params = {}
    for slot in ("eta11", "eta12", "eta22"):
        value = getattr(args, slot)
        if value is not None:
            params[slot] = "sym" if value == "sym" else _rational(value, f"--{slot}")
    kappa = None if args.kappa is None else _rational(args.kappa, "--kappa")
    if args.case != "N6" and kappa is not None:
        raise UsageError("--kappa applies to N6 only")
    return case_data(args.case, params, kappa=kappa)


def _parse(case: CatalogCase, text: str) -> Expr:
    bindings = {"k": case.kappa} if case.kappa is not None else None
    return parse_expression(text, case.jet, bindings=bindings, functions=FUNCTION_NAMES)


def _function_of_u1(case: CatalogCase, e: Expr, name: str) -> Expr:
    jets = [
        s for s in e.free_symbols
        if case.jet.jet_index(s) not in (None, (0, 0)) or case.jet.log_index(s) is not None
    ]
    if jets or not case.field.is_zero(case.field.partial(e, 1)):
        raise UsageError(f"{name} = '{format_expression(e)}' must be a function of u1 alone")
    return e


def functional_parameters(args: argparse.Namespace, case: CatalogCase) -> List[Expr]:
    """F1..F4 from the flags, F_k(u1) for the ones not given."""
    defaults = case.functions()
    functions = []
    for k, default in enumerate(defaults):
        text = getattr(args, f"F{k + 1}", None)
        functions.append(default if text is None else _function_of_u1(case, _parse(case, text), f"F{k + 1}"))
    extra = [k + 1 for k in range(len(defaults), 4) if getattr(args, f"F{k + 1}", None) is not None]
    if extra:
        raise UsageError(f"{case.label} takes {len(defaults)} functional parameters; F{extra[0]} is not used")
    return functions


def random_functions(case: CatalogCase, rng: random.Random) -> List[Expr]:
    """Quadratic polynomials in u1 with small random rational coefficients."""
    u1 = case.u(0)
    draw = lambda: Rational(rng.randint(-9, 9), rng.randint(1, 5))
    return [draw() + draw() * u1 + draw() * u1 ** 2 for _ in range(case.arity)]


def random_miura(case: CatalogCase, rng: random.Random) -> MiuraMap:
    """A degree preserving Miura map with random rational constant coefficients."""
    jet = case.jet
    draw = lambda: Rational(rng.randint(-5, 5), rng.randint(1, 3))
    first = [draw() * jet.jet(0, 1) + draw() * jet.jet(1, 1) for _ in range(2)]
    second = [draw() * jet.jet(0, 2) + draw() * jet.jet(1, 2) + draw() * jet.jet(0, 1) * jet.jet(1, 1)
              for _ in range(2)]
    return MiuraMap(jet, {1: first, 2: second})


def _require_family(case: CatalogCase):
    if case.family is None:
        raise CheckSkipped(f"{case.label} has no classified deformation family")


def _instantiations(args: argparse.Namespace, case: CatalogCase, run: VerificationRun) -> List[List[Expr]]:
    if not getattr(args, "random", False):
        return [functional_parameters(args, case)]
    rng = random.Random(args.seed)
    trials = [random_functions(case, rng) for _ in range(RANDOM_TRIALS)]
    for k, functions in enumerate(trials):
        run.note(f"trial {k + 1}: " + ", ".join(format_expression(F) for F in functions))
    return trials


def _dump(title: str, lines: Sequence[str]):
    print(f"# {title}")
    for line in lines:
        print(line)


#
# Suites
#
def dispersionless_checks(run: VerificationRun, case: CatalogCase, args: argparse.Namespace):
    run.note("flags: " + ", ".join(f"{key}={value}" for key, value in case.flags().items()))
    if args.dump:
        _dump("omega2", case.omega2.dump("omega2"))
        _dump("omega1", case.omega1.dump("omega1"))

    run.add("novikov-axioms", "Balinskii-Novikov axioms of the structure constants",
            lambda: Outcome(is_novikov(case.structure)))
    run.add("invariant-form", "invariance of the bilinear form eta",
            lambda: Outcome(is_invariant_form(case.structure, case.eta)))
    run.add("omega1-poisson", "[omega1, omega1] = 0",
            lambda: Outcome.from_trivector(schouten_bracket(case.omega1, case.omega1), 0))
    run.add("omega2-poisson", "[omega2, omega2] = 0",
            lambda: Outcome.from_trivector(schouten_bracket(case.omega2, case.omega2), 0))
    run.add("compatibility", "[omega1, omega2] = 0",
            lambda: Outcome.from_trivector(schouten_bracket(case.omega1, case.omega2), 0))


def deformation_checks(run: VerificationRun, case: CatalogCase, args: argparse.Namespace):
    if case.family is None:
        raise UsageError(f"{case.label} has no classified deformation family")
    trials = _instantiations(args, case, run)
    if args.dump:
        X = deformation_field(case, *trials[0])
        _dump("X", [f"X[{i + 1}] = {format_expression(c)}" for i, c in enumerate(X)])

    for k, functions in enumerate(trials):
        suffix = "" if len(trials) == 1 else f"[{k + 1}]"

        def poisson(functions=functions) -> Outcome:
            return Outcome.from_pencil(is_poisson_pencil(deformed_pencil(case, *functions)))

        def homogeneity(functions=functions) -> Outcome:
            audit = deformed_pencil(case, *functions).homogeneity_audit()
            return Outcome(not audit, nonzero_count=len(audit), first_offending=audit[0] if audit else None)

        def polynomial(functions=functions) -> Outcome:
            if case.family not in ("T3", "N3", "N5", "N6"):
                raise CheckSkipped(f"{case.label} is not deformed through quasi-Hamiltonians")
            X = deformation_field(case, *functions)
            offending = [(i, c) for i, c in enumerate(X) if not case.jet.is_polynomial(c)]
            first = f"X[{offending[0][0] + 1}] = {format_expression(offending[0][1])}" if offending else None
            return Outcome(not offending, 2, len(offending), first)

        run.add(f"deformation-poisson{suffix}", "second order deformation is Poisson up to eps^3", poisson)
        run.add(f"homogeneity{suffix}", "layer k carries differential degree k + 1", homogeneity)
        run.add(f"quasi-hamiltonian{suffix}", "log terms of X = omega2 dH - omega1 dK cancel", polynomial)

    def degenerate_limit() -> Outcome:
        if case.family != "T3" or len(trials) != 1:
            raise CheckSkipped("the eta22 -> 0 limit is checked on one explicit T3 instantiation")
        F1, F2 = trials[0]
        if CoefficientField.applied_functions(F1) or CoefficientField.applied_functions(F2):
            raise CheckSkipped("the eta22 -> 0 limit needs explicit F1 and F2")
        eta12 = case.parameter("eta12")
        if isinstance(eta12, Symbol):
            raise CheckSkipped("the eta22 -> 0 limit needs a rational eta12")
        residuals = degenerate_limit_residual(F1, F2, {"u1": 2, "u2": 3}, eta12)
        return Outcome.from_components(residuals, "X - X0", 2)

    run.add("degenerate-limit", "T3 family tends to the eta22 = 0 family", degenerate_limit)


def truncated_checks(run: VerificationRun, case: CatalogCase, args: argparse.Namespace):
    if case.family is None:
        raise UsageError(f"{case.label} has no truncated structure")
    f = None if args.f is None else _function_of_u1(case, _parse(case, args.f), "f")
    h = None if args.h is None else _function_of_u1(case, _parse(case, args.h), "h")
    if args.dump:
        _dump("Theta", truncated_pencil(case, f, h).layer(2)[0].dump("Theta"))

    run.add("truncated-poisson", "truncated pencil is Poisson at every eps order",
            lambda: Outcome.from_pencil(is_poisson_pencil(truncated_pencil(case, f, h), all_orders=True)))

    def reduced() -> Outcome:
        target = truncated_pencil(case, f, h)
        flowed = reduction(case, f, h).pencil()
        difference = flowed.layer(2)[0] - target.layer(2)[0]
        nonzero = [(i, j, m, c) for i, j, m, c in difference.terms()]
        first = None
        if nonzero:
            i, j, m, c = nonzero[0]
            first = f"Theta[{i + 1}][{j + 1}] dx^{m}: {format_expression(c)}"
        passed = flowed.equals(target, through=2)
        return Outcome(passed, 2, len(nonzero), first)

    run.add("reduction", "deformation family flows onto the truncated structure", reduced)


def firstorder_checks(run: VerificationRun, case: CatalogCase, args: argparse.Namespace):
    data = {}
    for item in args.set:
        key, separator, text = item.partition("=")
        if not separator:
            raise UsageError(f"--set expects KEY=EXPR, got '{item}'")
        data[key.strip()] = _parse(case, text)
    family = firstorder_family(case, data)
    if args.dump:
        _dump("X", [f"X[{i + 1}] = {format_expression(c)}" for i, c in enumerate(family.X)])
        _dump("trivializer", [f"H = {format_expression(family.H.density)}", f"K = {format_expression(family.K.density)}"])

    run.add("cocycle", "X is a cocycle of d1 and d2",
            lambda: Outcome.from_trivector(cocycle_check_d1d2(family.X, case.omega1, case.omega2), 1))
    run.add("trivializer", "X = omega1 dH + omega2 dK",
            lambda: Outcome.from_components(family.residual(), "X - omega1 dH - omega2 dK", 1))


def invariant_checks(run: VerificationRun, case: CatalogCase, args: argparse.Namespace):
    if case.family is None:
        raise UsageError(f"{case.label} has no classified deformation family")
    functions = functional_parameters(args, case)
    field = case.field
    closed = closed_form_invariants(case, *functions)
    for key, value in closed.items():
        print(f"{key} = {format_expression(value)}")
        run.note(f"{key} = {format_expression(value)}")

    @lru_cache(maxsize=None)
    def expansion():
        det = dispersive_symbol_det(deformed_pencil(case, *functions))
        return expand_roots(det, field, order=ROOT_ORDER, r=case.eigenvalue())

    def matches_closed_form() -> Outcome:
        found = expansion()
        computed = {"lambda2": found.lambda2()}
        if "lambda1_squared" in closed:
            computed["lambda1_squared"] = found.lambda1_squared()
        for key, value in computed.items():
            if not field.equal(value, closed[key]):
                return Outcome(
                    False, ROOT_ORDER, 1,
                    f"{key}: {format_expression(value)} != {format_expression(closed[key])}"
                )
        return Outcome(True, ROOT_ORDER)

    def sks() -> Outcome:
        return Outcome(expansion().sks_holds(), ROOT_ORDER, detail=repr(expansion()))

    def back_substitution() -> Outcome:
        residuals = expansion().residuals()
        nonzero = [(b, k, c) for b, residual in enumerate(residuals) for k, c in enumerate(residual) if c != 0]
        first = f"branch {nonzero[0][0] + 1}, p^{nonzero[0][1]}: {format_expression(nonzero[0][2])}" if nonzero else None
        return Outcome(not nonzero, ROOT_ORDER, len(nonzero), first)

    def residue() -> Outcome:
        value = residue_invariant(deformed_pencil(case, *functions), case.eigenvalue())
        return Outcome.from_equality(value, closed["lambda2"], "lambda2", field.is_zero)

    def residue_theta12() -> Outcome:
        if case.family != "N4":
            raise CheckSkipped("the standard form entry Theta12 is given for N4")
        value, target = n4_residue_variant(case, deformed_pencil(case, *functions), *functions)
        return Outcome.from_equality(value, target, "-eta12/2 Res", field.is_zero)

    def oracle() -> Outcome:
        found = expansion().lambda2()
        if CoefficientField.applied_functions(found) or CoefficientField.applied_functions(closed["lambda2"]):
            raise CheckSkipped("the numeric cross-check needs explicit functional parameters")
        point = {Symbol(name): value for name, value in ORACLE_POINT.items()}
        expected = numeric_value(field, closed["lambda2"], point)
        computed = numeric_value(field, found, point)
        detail = f"closed form {expected:.12g}, expansion {computed:.12g}"
        return Outcome(cmath.isclose(expected, computed, rel_tol=ORACLE_TOLERANCE, abs_tol=1e-12), detail=detail)

    run.add("root-expansion", "expansion of the symbol roots matches the closed form", matches_closed_form)
    run.add("root-symmetry", "odd coefficients opposite and even coefficients equal on both branches", sks)
    run.add("back-substitution", "root series annihilate the dispersive symbol determinant", back_substitution)
    run.add("residue", "lambda2 as a residue of the trace of g^-1 Lambda", residue)
    run.add(
        "residue-theta12",
        "-eta12/2 Res equals Theta12 - eta22 Theta11 / (2 eta12) of the N4 standard form",
        residue_theta12
    )
    run.add("numeric-oracle", "floating point value at (u1, u2) = (2, 3)", oracle)

    if args.random:
        rng = random.Random(args.seed)
        maps = [random_miura(case, rng) for _ in range(RANDOM_TRIALS)]
        for k, M in enumerate(maps):
            def invariance(M=M) -> Outcome:
                moved = pushforward_miura(deformed_pencil(case, *functions), M)
                other = expand_roots(dispersive_symbol_det(moved), field, order=ROOT_ORDER, r=case.eigenvalue())
                mine = expansion().branches
                same = lambda a, b: all(field.equal(a[j], b[j]) for j in range(ROOT_ORDER + 1))
                theirs = other.branches
                unchanged = (same(mine[0], theirs[0]) and same(mine[1], theirs[1])) or \
                            (same(mine[0], theirs[1]) and same(mine[1], theirs[0]))
                return Outcome(unchanged, ROOT_ORDER, detail=None if unchanged else repr(other))

            run.add(f"miura-invariance[{k + 1}]", "root expansions are unchanged by Miura maps", invariance)


def lift_checks(run: VerificationRun, case: CatalogCase, args: argparse.Namespace):
    jet = case.jet
    space = lambda: TangentLift(jet)
    if args.dump:
        _dump("lift of omega2", lift_operator(case.omega2, space()).operator.dump("omega2^"))

    def routes(g, label: str) -> Callable[[], Outcome]:
        def check() -> Outcome:
            if case.field.is_zero(case.field.normalize(sympify(g.det()))):
                raise CheckSkipped(f"{label} is degenerate")
            return Outcome(metric_routes_agree(g, space()))
        return check

    def determinant(g) -> Callable[[], Outcome]:
        return lambda: Outcome(lifted_determinant_identity(g, space()))

    run.add("metric-routes-omega1", "lift of eta d_x equals the operator of the lifted metric", routes(case.eta, "eta"))
    run.add("metric-routes-omega2", "lift of omega2 equals the operator of the lifted metric", routes(case.g2, "g2"))
    run.add("lifted-determinant-eta", "det of the lifted metric is +-(det eta)^2", determinant(case.eta))
    run.add("lifted-determinant-g2", "det of the lifted metric is +-(det g2)^2", determinant(case.g2))

    for name, P, Q in (("omega1-omega1", case.omega1, case.omega1),
                       ("omega2-omega2", case.omega2, case.omega2),
                       ("omega1-omega2", case.omega1, case.omega2)):
        def schouten(P=P, Q=Q) -> Outcome:
            check = verify_lift_schouten(P, Q, space())
            count, first = check.lifted.summary()
            detail = ", ".join(f"{label}: {block.summary()[0]}" for label, block in check.blocks.items())
            return Outcome(check.holds, 0, count, first, detail)
        run.add(f"lift-schouten-{name}", "brackets of lifted operators vanish with the base brackets", schouten)

    for k, text in enumerate(SAMPLE_DENSITIES):
        def hamiltonian(text=text) -> Outcome:
            H = LocalFunctional(jet, _parse(case, text))
            return Outcome.from_components(hamiltonian_lift_residual(case.omega2, H, space()), "lift residual")
        run.add(f"hamiltonian-lift[{k + 1}]", "lift of omega2 dH is the lifted operator on the lifted H", hamiltonian)

    for k, (xi, eta) in enumerate(zip(SAMPLE_FORMS, SAMPLE_FORMS[1:] + SAMPLE_FORMS[:1])):
        def forms(xi=xi, eta=eta) -> Outcome:
            return Outcome(lifted_bracket_matches(
                case.eta, [_parse(case, c) for c in xi], [_parse(case, c) for c in eta], space()
            ))
        run.add(f"forms-bracket[{k + 1}]", "lifted Poisson bracket of linear functionals is the bracket of 1-forms",
                forms)

    run.add("derivation-commutes", "tangent derivation commutes with d_x",
            lambda: Outcome(space().derivation_commutes_with_dx(_parse(case, "u1*u2_x^2 + u1_xx*u2"))))

    def deformed() -> Outcome:
        if not args.deformed:
            raise CheckSkipped("run with --deformed to lift the second order deformation")
        _require_family(case)
        return Outcome(lift_preserves_poisson(deformed_pencil(case), space()), 2)

    run.add("lift-deformed", "lift of the deformed pencil stays Poisson up to eps^3", deformed)


def lift_demo_checks(run: VerificationRun, args: argparse.Namespace):
    f = None
    if args.f is not None:
        scalar = JetSpace(CoefficientField(("u",)))
        f = parse_expression(args.f, scalar, functions=("f",))
    run.note("scalar pencil 2u d_x + u_x - lambda d_x + eps^2 (2f d_x^3 + 3f_x d_x^2 + f_xx d_x)")

    def demo() -> Outcome:
        result = scalar_lift_demo(f)
        detail = None
        if result.differing_layers:
            detail = f"layers {result.differing_layers} differ"
        elif not result.symbol_identity:
            detail = "lifted symbol determinant is not minus the square of the scalar one"
        return Outcome(result.passed, 2, len(result.differing_layers), detail=detail)

    run.add("scalar-lift", "lifted scalar pencil is a flowed N6 deformation", demo)


SUITES: Dict[str, Callable[[VerificationRun, CatalogCase, argparse.Namespace], None]] = {
    "verify-dispersionless": dispersionless_checks,
    "verify-deformation": deformation_checks,
    "verify-truncated": truncated_checks,
    "verify-firstorder": firstorder_checks,
    "invariants": invariant_checks,
    "verify-lift": lift_checks,
}


def prepare(args: argparse.Namespace) -> VerificationRun:
    """
    Build the run of a parsed command line.

    :raises PencilForgeError: on a case, parameter or expression the command cannot use
    """
    seed = getattr(args, "seed", None)
    if getattr(args, "random", False) and seed is None:
        raise UsageError("--random needs --seed")
    if args.command == "list-cases":
        run = VerificationRun(args.command, parameters={"kappa": args.kappa}, parallel=args.parallel)
        for row in list_cases(_rational(args.kappa, "--kappa")):
            flags = " ".join(key for key in ("degenerate", "semisimple", "deformation_family") if row[key])
            line = f"{row['id']}: parameters {row['parameters']}, arity {row['arity']}, flags [{flags}]"
            print(line)
            run.note(line)
        return run
    if args.command == "lift-demo":
        run = VerificationRun(args.command, parameters=_parameters(args), parallel=args.parallel)
        lift_demo_checks(run, args)
        return run
    case = select_case(args)
    run = VerificationRun(args.command, case.label, _parameters(args), seed, parallel=args.parallel)
    run.note("the factor 2 of the Schouten bracket is dropped")
    SUITES[args.command](run, case, args)
    return run


def print_report(report: VerificationReport):
    for note in report.notes:
        print(f"  note: {note}")
    for check in report.checks:
        order = "" if check.max_eps_order is None else f" (eps^{check.max_eps_order})"
        print(f"[{check.status.value}] {check.name}{order}: {check.anchor}")
        if check.residual.nonzero_count:
            print(f"    {check.residual.nonzero_count} nonzero, first {check.residual.first_offending}")
        if check.detail:
            print(f"    {check.detail}")
    verdict = "PASS" if report.passed else "FAIL"
    print(f"[{report.command}] {verdict} ({len(report.checks)} checks)")


def write_report(report: VerificationReport, path: str):
    data = report.export()
    ReportMetadata().validate(data)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w") as stream:
        json.dump(data, stream, indent=2, sort_keys=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as error:
        return 0 if error.code == 0 else 2
    try:
        run = prepare(args)
    except PencilForgeError as error:
        print(f"[error] {error}", file=sys.stderr)
        return 2
    report = run.run()
    print_report(report)
    if args.json:
        try:
            write_report(report, args.json)
        except (PencilForgeError, OSError) as error:
            print(f"[error] {error}", file=sys.stderr)
            return 2
    logger.info(f"{args.command} finished: {'pass' if report.passed else 'fail'}", check_id=run.run_id)
    return 0 if report.passed else 1


if __name__ == '__main__':
    sys.exit(main())
