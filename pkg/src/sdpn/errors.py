"""Exception hierarchy shared by all sdpn modules."""


class SdpnError(Exception):
    """Base class for all errors raised by this package."""


class NetFormatError(SdpnError):
    """A net or Bayesian-network document violates the file schema."""


class BudgetExceeded(SdpnError):
    """State-space or run exploration exceeded the configured budget."""


class CyclicNet(SdpnError):
    """Operation requires an acyclic net but the causal relation has a cycle."""


class NotControllable(SdpnError):
    """A deactivation set contains transitions outside the controllable set."""


class StepCapExceeded(SdpnError):
    """A simulated run exceeded the per-run step cap."""


class NotOccurrenceNet(SdpnError):
    """Operation requires a free-choice occurrence net."""


class NotSafc(SdpnError):
    """Operation requires a safe, acyclic, free-choice net."""


class AssumptionViolated(SdpnError):
    """An initially marked place has a producing transition."""


class HorizonNotConverged(SdpnError):
    """Value iteration failed to stabilize within the configured horizon."""


class RewardDiverges(SdpnError):
    """Expected total reward is unbounded (recurrent nonzero reward)."""


class CapExceeded(SdpnError):
    """Too many controllable transitions for exhaustive policy search."""


class SolverUnavailable(SdpnError):
    """The external SMT solver command could not be executed."""


class SolverTimeout(SdpnError):
    """The external SMT solver exceeded the wall-clock timeout."""


class SolverOutputUnparseable(SdpnError):
    """The external SMT solver produced output we cannot interpret."""


class WitnessVerificationFailed(SdpnError):
    """A solver model failed exact re-evaluation; indicates an encoding bug."""


class NotBinary(SdpnError):
    """Operation requires a binary Bayesian network."""


class NotUniformInput(SdpnError):
    """A MAP variable is not an input node of the network."""


class ZeroConditioning(SdpnError):
    """Conditional query against an event of probability zero."""


class BoundExceeded(SdpnError):
    """A structural bound (per-cell controllables or rewarded places) is exceeded."""


class InconsistentReward(SdpnError):
    """A transition reward failed the run-by-run consistency identity."""
