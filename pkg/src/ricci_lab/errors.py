"""Exception hierarchy shared by all lab modules."""


class LabError(Exception):
    """Base class for every error raised by the lab."""


class NonPositiveDefinite(LabError):
    def __init__(self, node, value):
        self.node = tuple(int(i) for i in node)
        self.value = float(value)
        super().__init__(f"metric not positive definite at node {self.node} (lambda_min={self.value:.3e})")


class BallTooLarge(LabError):
    pass


class DegenerateParameters(LabError):
    pass


class StepFailure(LabError):
    pass


class BlowUpGuard(LabError):
    pass


class SingularJacobian(LabError):
    def __init__(self, node, time, det):
        self.node = tuple(int(i) for i in node)
        self.time = float(time)
        self.det = float(det)
        super().__init__(f"det DPhi={self.det:.3e} <= 0 at node {self.node}, t={self.time:.4g}")


class NoCurveFound(LabError):
    pass


class SearchFailed(LabError):
    def __init__(self, attained, bound):
        self.attained = float(attained)
        self.bound = float(bound)
        super().__init__(f"best line integral {self.attained:.6f} exceeds bound {self.bound:.6f}")


class ConfigError(LabError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class MissingArtifacts(LabError):
    pass
