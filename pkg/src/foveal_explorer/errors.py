"""Exception hierarchy for the exploration engine."""


class FovealExplorerError(Exception):
    """Base class for all engine errors."""


class ContractError(FovealExplorerError, ValueError):
    """A caller violated an operation precondition."""


class ValidationError(FovealExplorerError):
    """An external file, payload, or configuration failed validation."""


class ManifestError(ValidationError):
    """A run manifest is malformed or references missing paths."""


class ModelFileError(ValidationError):
    """An observation-model file could not be used."""


class ModelVersionError(ModelFileError):
    """The model file was written by an incompatible format version."""


class ModelCorruptError(ModelFileError):
    """The model file is truncated or structurally invalid."""


class DetectorSourceError(FovealExplorerError):
    """A detection source failed while an exploration run was in flight."""


class BridgeError(DetectorSourceError):
    """Base class for detector-bridge client failures."""


class BridgeNetworkError(BridgeError):
    """The bridge endpoint could not be reached."""


class BridgeTimeoutError(BridgeError):
    """The bridge did not answer within the configured timeout."""


class BridgeSchemaError(BridgeError, ValidationError):
    """The bridge answered with a payload that violates the wire schema."""
