"""
Report data models of the verification harness.
"""
from typing import Optional, List, Dict, Any
from datetime import datetime
from enum import Enum
import json

from pydantic import BaseModel, Field


REPORT_SCHEMA_VERSION = "1.0"


class LogLevelEnum(str, Enum):
    debug = "DEBUG"
    info = "INFO"
    warning = "WARNING"
    error = "ERROR"


class CheckStatus(str, Enum):
    passed = "pass"
    failed = "fail"
    skipped = "skipped"


class LogEntry(BaseModel):
    timestamp: datetime
    level: Optional[LogLevelEnum] = None
    message: str

    def to_dict(self) -> Dict[str, Any]:
        return self.dict()


class ResidualSummary(BaseModel):
    """
    Condensed view of a residual: how many normal form
    coefficients survive and the first of them, printed.
    """
    nonzero_count: int = 0
    first_offending: Optional[str] = None


class CheckResult(BaseModel):
    name: str
    anchor: str
    status: CheckStatus
    max_eps_order: Optional[int] = None
    residual: ResidualSummary = Field(default_factory=ResidualSummary)
    detail: Optional[str] = None
    elapsed: float = 0.0


class VerificationReport(BaseModel):
    schema_version: str = REPORT_SCHEMA_VERSION
    command: str
    case: Optional[str] = None
    parameters: Dict[str, str] = Field(default_factory=dict)
    seed: Optional[int] = None
    truncation: int
    notes: List[str] = Field(default_factory=list)
    checks: List[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.status != CheckStatus.failed for check in self.checks)

    def sorted(self) -> "VerificationReport":
        """Copy of the report with its checks ordered by name."""
        return self.copy(update={"checks": sorted(self.checks, key=lambda check: check.name)})

    def export(self) -> Dict[str, Any]:
        """Plain data written to the JSON report, checks ordered by name."""
        data = json.loads(self.sorted().json())
        data["passed"] = self.passed
        return data

    def content(self) -> Dict[str, Any]:
        """
        Report data without wall clock timings; equal inputs give equal content.
        """
        data = self.export()
        for check in data["checks"]:
            check.pop("elapsed", None)
        return data
