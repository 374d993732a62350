class BridgeError(Exception):
    """Base for worker failures that turn into protocol error frames."""


class MaterializeError(BridgeError):
    """The serialized architecture cannot be built or violates its shapes."""


class ProtocolViolation(BridgeError):
    """The request breaks a documented protocol rule."""


class DatasetUnavailable(BridgeError):
    """The requested dataset is neither cached nor downloadable."""
