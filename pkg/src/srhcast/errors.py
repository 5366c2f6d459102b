"""Exception and warning types shared across the package."""


class SrhcastError(Exception):
    """Base class for package errors."""


# -- data model / encoding ------------------------------------------------

class UnderageIndividual(SrhcastError):
    """Individual is below the SRH eligibility age."""


class IneligibleIndividual(SrhcastError):
    """Individual cannot be encoded (e.g. child NA economic status)."""


class UnmappedArea(SrhcastError):
    """Area identifier missing from the geography lookup."""


class InvalidDistribution(SrhcastError):
    """Proportions are negative or do not sum to one."""


class UnknownStatusLabel(SrhcastError):
    """Historical economic-status label not in the mapping table."""


# -- microsimulation -------------------------------------------------------

class UnknownScenario(SrhcastError):
    """Migration scenario name is not one of M1/M2/M3."""


class MissingRate(SrhcastError):
    """Rate table lookup failed for an in-domain key."""


class MissingFlow(SrhcastError):
    """County flow table is missing a required origin/destination."""


class MissingProfileCell(SrhcastError):
    """Fertility profile has no rate for a required cell."""


class MissingTable(SrhcastError):
    """A named rate table required by a module was not supplied."""


class RowNotStochastic(SrhcastError):
    """Transition-table row does not sum to one."""


# -- ordinal regression -----------------------------------------------------

class NonFiniteLikelihood(SrhcastError):
    """Log-likelihood evaluated to a non-finite value."""


class Nonconvergence(SrhcastError):
    """Optimizer hit the iteration cap before the gradient tolerance."""


# -- alignment ----------------------------------------------------------------

class NoFallback(SrhcastError):
    """No cohort, age-sex, or national alignment entry available."""


# -- compositional forecasting -----------------------------------------------

class DegenerateKernel(SrhcastError):
    """Kernel matrix not positive definite even after jitter."""


class TooFewSamples(SrhcastError):
    """Not enough Monte Carlo samples for percentile scenarios."""


# -- spatial analysis ----------------------------------------------------------

class NoFacilities(SrhcastError):
    """Facility list is empty."""


class EmptyArea(SrhcastError):
    """Area has no eligible individuals to aggregate."""


# -- synthetic data -------------------------------------------------------------

class InfeasibleSpec(SrhcastError):
    """Generator spec cannot be satisfied (e.g. forced odd married count)."""


# -- pipeline ---------------------------------------------------------------------

class MissingOutputs(SrhcastError):
    """Report requested before the pipeline produced its outputs."""


# -- warnings (recoverable events, logged and continued) -------------------------

class SeparationWarning(UserWarning):
    """A fitted coefficient is implausibly large (quasi-separation)."""


class ZeroMicroProportion(UserWarning):
    """Microdata proportion was zero where the prediction is positive."""


class OddMarriedCount(UserWarning):
    """A married individual could not be paired and was demoted to single."""


class EmptyDonorPool(UserWarning):
    """No immigrant donor with the exact age/sex/citizenship; nearest used."""
