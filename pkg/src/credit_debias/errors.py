"""Exception hierarchy shared by every module.

Each error carries a stable ``code`` so the CLI can emit machine-readable
failures on stderr.
"""


class CreditDebiasError(ValueError):
    code = "Error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details


class MissingColumn(CreditDebiasError):
    code = "MissingColumn"


class DuplicateColumn(CreditDebiasError):
    code = "DuplicateColumn"


class NonBinaryTarget(CreditDebiasError):
    code = "NonBinaryTarget"


class SchemaError(CreditDebiasError):
    code = "SchemaError"


class UnrecognizedLayout(CreditDebiasError):
    code = "UnrecognizedLayout"


class BadFoldCount(CreditDebiasError):
    code = "BadFoldCount"


class InvalidSpec(CreditDebiasError):
    code = "InvalidSpec"


class NotDiscrete(CreditDebiasError):
    code = "NotDiscrete"


class StateSpaceTooLarge(CreditDebiasError):
    code = "StateSpaceTooLarge"


class NoHiddenColumns(CreditDebiasError):
    code = "NoHiddenColumns"


class UnknownFeature(CreditDebiasError):
    code = "UnknownFeature"


class UnknownLevel(CreditDebiasError):
    code = "UnknownLevel"


class SingleClassTarget(CreditDebiasError):
    code = "SingleClassTarget"


class EmptyFeatureSet(CreditDebiasError):
    code = "EmptyFeatureSet"


class FeatureMismatch(CreditDebiasError):
    code = "FeatureMismatch"


class NonConvergence(CreditDebiasError):
    code = "NonConvergence"


class MissingScreeningReport(CreditDebiasError):
    code = "MissingScreeningReport"


class SingleClass(CreditDebiasError):
    code = "SingleClass"


class LengthMismatch(CreditDebiasError):
    code = "LengthMismatch"


class ConfigParse(CreditDebiasError):
    code = "ConfigParse"
