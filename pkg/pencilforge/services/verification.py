"""
Verification runs: named checks executed against the engine and assembled
into a VerificationReport.
"""
import asyncio
import time
from typing import Optional, Callable, Dict, List, Sequence, Union
from uuid import uuid4

from pencilforge.models import CheckResult, CheckStatus, ResidualSummary, VerificationReport
from pencilforge.services.config import config
from pencilforge.services.util import COEFF
from pencilforge.services.util.jetspace import EvoField
from pencilforge.services.util.brackets import TriVectorNF, PencilResidual
from pencilforge.services.util.parser import format_expression
from pencilforge.services.util.logutil import LoggingUtil

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)

DEFAULT_TRUNCATION = config.section('pencilforge').get_int('truncation', 3)


class CheckSkipped(Exception):
    """Raised inside a check that does not apply to the selected case."""


class Outcome:
    """What a check found: pass or fail, the epsilon order reached and a residual summary."""

    def __init__(
            self,
            passed: bool,
            max_eps_order: Optional[int] = None,
            nonzero_count: int = 0,
            first_offending: Optional[str] = None,
            detail: Optional[str] = None
    ):
        self.passed = passed
        self.max_eps_order = max_eps_order
        self.nonzero_count = nonzero_count
        self.first_offending = first_offending
        self.detail = detail

    @classmethod
    def from_trivector(cls, residual: TriVectorNF, max_eps_order: Optional[int] = None) -> "Outcome":
        count, first = residual.summary()
        return cls(count == 0, max_eps_order, count, first)

    @classmethod
    def from_pencil(cls, residual: PencilResidual) -> "Outcome":
        count, first = residual.summary()
        detail = None
        if residual.non_skew_layers:
            detail = f"layers {residual.non_skew_layers} are not skew-adjoint"
        passed = residual.vanishes and not residual.non_skew_layers
        return cls(passed, residual.vanishes_through(), count, first, detail)

    @classmethod
    def from_components(
            cls,
            components: Union[EvoField, Sequence[COEFF]],
            label: str = "X",
            max_eps_order: Optional[int] = None
    ) -> "Outcome":
        nonzero = [(i, c) for i, c in enumerate(components) if c != 0]
        first = f"{label}[{nonzero[0][0] + 1}] = {format_expression(nonzero[0][1])}" if nonzero else None
        return cls(not nonzero, max_eps_order, len(nonzero), first)

    @classmethod
    def from_equality(cls, left: COEFF, right: COEFF, label: str, is_zero: Callable[[COEFF], bool]) -> "Outcome":
        if is_zero(left - right):
            return cls(True)
        return cls(False, nonzero_count=1, first_offending=f"{label}: {format_expression(left)} != {format_expression(right)}")


CHECK = Callable[[], Outcome]


class VerificationRun:
    """
    Checks registered by name and run, sequentially or in worker threads;
    an exception inside a check marks that check failed and the run goes on.
    """
    def __init__(
            self,
            command: str,
            case: Optional[str] = None,
            parameters: Optional[Dict[str, str]] = None,
            seed: Optional[int] = None,
            truncation: Optional[int] = None,
            parallel: bool = False
    ):
        self.run_id = str(uuid4())
        self.report = VerificationReport(
            command=command,
            case=case,
            parameters=parameters or {},
            seed=seed,
            truncation=truncation or DEFAULT_TRUNCATION,
        )
        self.parallel = parallel
        self._checks: List[tuple] = []

    def note(self, text: str):
        self.report.notes.append(text)

    def add(self, name: str, anchor: str, check: CHECK):
        self._checks.append((name, anchor, check))

    def _execute(self, name: str, anchor: str, check: CHECK) -> CheckResult:
        start = time.perf_counter()
        try:
            outcome = check()
            status = CheckStatus.passed if outcome.passed else CheckStatus.failed
            result = CheckResult(
                name=name,
                anchor=anchor,
                status=status,
                max_eps_order=outcome.max_eps_order,
                residual=ResidualSummary(
                    nonzero_count=outcome.nonzero_count,
                    first_offending=outcome.first_offending
                ),
                detail=outcome.detail,
            )
        except CheckSkipped as skipped:
            result = CheckResult(name=name, anchor=anchor, status=CheckStatus.skipped, detail=str(skipped))
        except Exception as error:
            logger.error(f"Check '{name}' raised {type(error).__name__}: {error}", check_id=self.run_id)
            result = CheckResult(
                name=name,
                anchor=anchor,
                status=CheckStatus.failed,
                detail=f"{type(error).__name__}: {error}"
            )
        result.elapsed = time.perf_counter() - start
        logger.info(f"{name}: {result.status.value} in {result.elapsed:.2f}s", check_id=self.run_id)
        return result

    async def _run_all(self) -> List[CheckResult]:
        if not self.parallel:
            return [self._execute(*entry) for entry in self._checks]
        return list(await asyncio.gather(*[
            asyncio.to_thread(self._execute, *entry) for entry in self._checks
        ]))

    def run(self) -> VerificationReport:
        self.report.checks = asyncio.run(self._run_all())
        return self.report.sorted()

    def logs(self) -> List[Dict[str, str]]:
        return logger.get_logs(self.run_id)
