class AdaptSRError(RuntimeError):
    """Base class for every error raised by adaptsr."""


class InvalidConfigError(AdaptSRError, ValueError):
    pass


class DimensionError(AdaptSRError, ValueError):
    pass


class AdapterStateError(AdaptSRError):
    """Operation not legal in the current wrapped/merged/injected state."""


class TargetResolutionError(AdaptSRError, ValueError):
    pass


class CheckpointIncompatibleError(AdaptSRError):
    pass
