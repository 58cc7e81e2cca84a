class AuditError(Exception):
    """Base class for every failure the audit reports to the user."""

    exit_code = 1


class ConfigError(AuditError):
    exit_code = 2


class DataError(AuditError):
    exit_code = 3


class IngestError(DataError):
    pass


class UnknownHandleError(DataError, LookupError):
    pass


class UndefinedMetricError(DataError):
    pass


class SamplingError(DataError):
    pass


class EvalError(DataError):
    pass


class ReportWriteError(DataError):
    pass


class NumericFault(AuditError):
    exit_code = 4


class TrainingDivergedError(NumericFault):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(
            f"training diverged at epoch {epoch}, batch {batch} (loss={loss})"
        )
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class MetricFaultError(NumericFault):
    pass


class StageFailed(AuditError):
    """Raised by the orchestrator; keeps the stage name and the original error."""

    def __init__(self, stage: str, cause: AuditError):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code
