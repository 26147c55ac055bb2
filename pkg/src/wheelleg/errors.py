"""Exception hierarchy shared across the package.

Every error carries a short machine-readable ``code`` so the CLI can surface
module failures without parsing messages.
"""


class WheellegError(Exception):
    code = "error"


class KinematicsError(WheellegError, ValueError):
    code = "kinematics"


class JointLimitError(KinematicsError):
    """Joint values (given or solved) violate the actuated limits."""

    code = "joint_limit"


class ReachabilityError(KinematicsError):
    """Target lies outside the usable annulus of the leg."""

    code = "unreachable"


class NoFeasibleDesignError(WheellegError):
    code = "no_feasible_design"


class StanceError(WheellegError, ValueError):
    code = "stance"

    def __init__(self, message, leg=None):
        super().__init__(message)
        self.leg = leg


class SteeringInfeasibleError(WheellegError, ValueError):
    code = "steering_infeasible"


class NoEstimateError(WheellegError):
    code = "no_estimate"


class SimulationError(WheellegError, ValueError):
    code = "step"


class ConfigError(WheellegError, ValueError):
    """Invalid configuration; ``path`` is the dotted field path."""

    code = "config"

    def __init__(self, path, message, source=None):
        prefix = f"{source}: " if source else ""
        super().__init__(f"{prefix}{path}: {message}")
        self.path = path
        self.message = message
        self.source = source
