class SafecopterError(Exception):
    """Base class for every error raised by safecopter."""


class ConfigurationError(SafecopterError):
    """Invalid parameters, scenario files or initial conditions."""


class SingularThrust(SafecopterError):
    """Total thrust too small for the backstepping maps to be invertible.

    The thrust map g = [-T R A, -z_B] has |det g| = T**2.
    """

    def __init__(self, thrust, floor, step_index=None):
        self.thrust = thrust
        self.floor = floor
        self.step_index = step_index
        super().__init__(self._message())

    def _message(self):
        msg = f"|T| = {abs(self.thrust):.6g} N is below the singularity floor {self.floor:.6g} N"
        if self.step_index is not None:
            msg += f" at step {self.step_index}"
        return msg

    def at_step(self, step_index):
        return SingularThrust(self.thrust, self.floor, step_index)


class IntegrationDiverged(SafecopterError):
    """The integrator produced a non-finite state."""

    def __init__(self, message="non-finite state after integration step", step_index=None):
        self.step_index = step_index
        if step_index is not None:
            message = f"{message} (step {step_index})"
        super().__init__(message)

    def at_step(self, step_index):
        return IntegrationDiverged(step_index=step_index)
