"""
Error handling for the trip chain toolkit
Provides the exception hierarchy, stable error codes and severity-based logging
"""
from typing import Dict, Any, Optional
from datetime import datetime, timezone
from enum import Enum
import logging
import uuid

from pydantic import BaseModel

logger = logging.getLogger(__name__)


class ErrorCategory(str, Enum):
    """Error categories for classification"""
    INPUT = "input"
    VALIDATION = "validation"
    CONFIGURATION = "configuration"
    ANALYSIS = "analysis"
    USAGE = "usage"
    INTERNAL = "internal"


class ErrorSeverity(str, Enum):
    """Error severity levels"""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


ERROR_CODES: Dict[str, Dict[str, Any]] = {
    # Input errors (1100-1199)
    "INPUT_FILE_MISSING": {
        "code": "IN_1100",
        "message": "Input file does not exist",
        "category": ErrorCategory.INPUT,
        "severity": ErrorSeverity.MEDIUM
    },
    "INPUT_MALFORMED_ROW": {
        "code": "IN_1101",
        "message": "Malformed input row",
        "category": ErrorCategory.INPUT,
        "severity": ErrorSeverity.MEDIUM
    },
    "INPUT_HEADER_MISMATCH": {
        "code": "IN_1102",
        "message": "Input header does not match the expected columns",
        "category": ErrorCategory.INPUT,
        "severity": ErrorSeverity.MEDIUM
    },
    "INPUT_EMPTY": {
        "code": "IN_1103",
        "message": "Input file holds no records",
        "category": ErrorCategory.INPUT,
        "severity": ErrorSeverity.MEDIUM
    },
    "INPUT_CITY_INVALID": {
        "code": "IN_1104",
        "message": "City definition is invalid",
        "category": ErrorCategory.INPUT,
        "severity": ErrorSeverity.MEDIUM
    },
    "INPUT_PATH_OUTSIDE_DATA_DIR": {
        "code": "IN_1105",
        "message": "Path lies outside the service data directory",
        "category": ErrorCategory.INPUT,
        "severity": ErrorSeverity.HIGH
    },

    # Validation errors (1200-1299)
    "VALIDATION_OVERLAP": {
        "code": "VAL_1201",
        "message": "Overlapping stay intervals within a user-day",
        "category": ErrorCategory.VALIDATION,
        "severity": ErrorSeverity.MEDIUM
    },
    "VALIDATION_RECORD_INVALID": {
        "code": "VAL_1202",
        "message": "Stay record violates its invariants",
        "category": ErrorCategory.VALIDATION,
        "severity": ErrorSeverity.LOW
    },

    # Configuration errors (1300-1399)
    "CONFIGURATION_INVALID": {
        "code": "CFG_1301",
        "message": "Invalid configuration",
        "category": ErrorCategory.CONFIGURATION,
        "severity": ErrorSeverity.HIGH
    },
    "CONFIGURATION_UNKNOWN_KEY": {
        "code": "CFG_1302",
        "message": "Unknown configuration key",
        "category": ErrorCategory.CONFIGURATION,
        "severity": ErrorSeverity.MEDIUM
    },

    # Analysis errors (1400-1499)
    "ANALYSIS_DEGENERATE_INPUT": {
        "code": "ANA_1401",
        "message": "Input is degenerate for this analysis",
        "category": ErrorCategory.ANALYSIS,
        "severity": ErrorSeverity.MEDIUM
    },
    "ANALYSIS_UNDEFINED_METRIC": {
        "code": "ANA_1402",
        "message": "Metric is undefined for this chain",
        "category": ErrorCategory.ANALYSIS,
        "severity": ErrorSeverity.LOW
    },
    "ANALYSIS_PROJECTION_RANGE": {
        "code": "ANA_1403",
        "message": "Point is too far from the projection origin",
        "category": ErrorCategory.ANALYSIS,
        "severity": ErrorSeverity.MEDIUM
    },
    "ANALYSIS_INFEASIBLE_LAYOUT": {
        "code": "ANA_1404",
        "message": "Synthetic anchor layout violates spacing constraints",
        "category": ErrorCategory.ANALYSIS,
        "severity": ErrorSeverity.MEDIUM
    },

    # Usage errors (1500-1599)
    "USAGE_INVALID": {
        "code": "USE_1501",
        "message": "Invalid command usage",
        "category": ErrorCategory.USAGE,
        "severity": ErrorSeverity.LOW
    },

    # Pipeline errors (1600-1699)
    "PIPELINE_STAGE_FAILED": {
        "code": "PIPE_1601",
        "message": "Pipeline stage failed",
        "category": ErrorCategory.INTERNAL,
        "severity": ErrorSeverity.HIGH
    },
    "INTERNAL_ERROR": {
        "code": "INT_1801",
        "message": "Internal error occurred",
        "category": ErrorCategory.INTERNAL,
        "severity": ErrorSeverity.CRITICAL
    }
}


class TripChainError(Exception):
    """Base error carrying a registered error key and structured details"""

    default_key = "INTERNAL_ERROR"

    def __init__(
        self,
        message: Optional[str] = None,
        error_key: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.error_key = error_key if error_key in ERROR_CODES else self.default_key
        info = ERROR_CODES[self.error_key]
        self.message = message or info["message"]
        self.code: str = info["code"]
        self.category: ErrorCategory = info["category"]
        self.severity: ErrorSeverity = info["severity"]
        self.details: Dict[str, Any] = details or {}
        super().__init__(self.message)


class InputFormatError(TripChainError):
    """Malformed row, inconsistent header, empty or missing file"""
    default_key = "INPUT_MALFORMED_ROW"


class RecordValidationError(TripChainError):
    """Records that parse but violate the trace invariants"""
    default_key = "VALIDATION_RECORD_INVALID"


class ConfigurationError(TripChainError):
    default_key = "CONFIGURATION_INVALID"


class AnalysisError(TripChainError):
    """Analysis cannot be carried out on the given input"""
    default_key = "ANALYSIS_DEGENERATE_INPUT"


class UsageError(TripChainError):
    default_key = "USAGE_INVALID"


class StageError(TripChainError):
    """Wraps a failure with the name of the pipeline stage it came from"""
    default_key = "PIPELINE_STAGE_FAILED"

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        details = {"stage": stage, "exception_type": type(cause).__name__}
        if isinstance(cause, TripChainError):
            details.update(cause.details)
            details["cause_code"] = cause.code
        super().__init__(f"stage '{stage}' failed: {cause}", details=details)
        if isinstance(cause, TripChainError):
            self.category = cause.category
            self.severity = cause.severity


class APIError(BaseModel):
    """Standardized error body for the HTTP surface"""
    error_id: str
    error_code: str
    error_category: ErrorCategory
    message: str
    details: Optional[Dict[str, Any]] = None
    timestamp: datetime
    severity: ErrorSeverity = ErrorSeverity.MEDIUM


# Exit codes: 0 success, 1 data/validation error, 2 usage error
EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE_ERROR = 2


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit status"""
    if isinstance(error, TripChainError) and error.category == ErrorCategory.USAGE:
        return EXIT_USAGE_ERROR
    return EXIT_DATA_ERROR


class ErrorHandler:
    """Centralized error reporting"""

    def __init__(self, debug_mode: bool = False):
        self.debug_mode = debug_mode

    def to_api_error(self, error: TripChainError) -> APIError:
        return APIError(
            error_id=str(uuid.uuid4()),
            error_code=error.code,
            error_category=error.category,
            message=error.message,
            details=error.details or None,
            timestamp=datetime.now(timezone.utc),
            severity=error.severity
        )

    def log_error(self, error: BaseException, stage: Optional[str] = None) -> None:
        """Log error with a level chosen by severity"""
        if isinstance(error, TripChainError):
            severity = error.severity
            log_data = {
                "error_code": error.code,
                "category": error.category.value,
                "severity": severity.value,
                "details": error.details
            }
        else:
            severity = ErrorSeverity.CRITICAL
            log_data = {
                "error_code": ERROR_CODES["INTERNAL_ERROR"]["code"],
                "exception_type": type(error).__name__
            }
        if stage:
            log_data["stage"] = stage

        exc_info = self.debug_mode or severity == ErrorSeverity.CRITICAL
        message = str(error)
        if severity == ErrorSeverity.CRITICAL:
            logger.critical(message, extra=log_data, exc_info=exc_info)
        elif severity == ErrorSeverity.HIGH:
            logger.error(message, extra=log_data, exc_info=exc_info)
        elif severity == ErrorSeverity.MEDIUM:
            logger.error(message, extra=log_data)
        else:
            logger.warning(message, extra=log_data)


error_handler = ErrorHandler(debug_mode=False)
