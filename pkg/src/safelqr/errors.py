"""Exception hierarchy for safelqr.

Every error raised on purpose by the library derives from :class:`SafeLQRError`
and from the builtin exception that best describes it, so callers can catch
either.
"""


class SafeLQRError(Exception):
    """Base class of all safelqr errors."""


class InvalidArgumentError(SafeLQRError, ValueError):
    """An argument has the wrong shape, range, or structure."""


class UnstableArgumentError(SafeLQRError, ValueError):
    """A matrix that must be Schur stable (spectral radius < 1) is not."""


class DivergedError(SafeLQRError, RuntimeError):
    """The simulated state left the finite region.

    Attributes:
        step: Step index at which divergence was detected.
        norm: Euclidean norm of the offending state (may be ``inf``/``nan``).
    """

    def __init__(self, step: int, norm: float, message: str | None = None):
        self.step = int(step)
        self.norm = float(norm)
        super().__init__(
            message or f"State diverged at step {self.step} (norm {self.norm:.3e})."
        )


class DareFailureError(SafeLQRError, RuntimeError):
    """The Riccati iteration did not converge or produced an unstable gain."""


class UnavailableEstimateError(SafeLQRError, LookupError):
    """A Markov parameter estimate was requested before any data supports it."""


class DegenerateProbesError(SafeLQRError, RuntimeError):
    """Probe inputs stayed rank deficient after all redraws."""


class BoundValidityError(SafeLQRError, ValueError):
    """A bound was evaluated outside the region where it holds."""


class CertificateUnavailableError(SafeLQRError, RuntimeError):
    """No common Lyapunov certificate could be found for the given matrices."""


class UsageError(SafeLQRError, ValueError):
    """Invalid command-line or experiment configuration."""
