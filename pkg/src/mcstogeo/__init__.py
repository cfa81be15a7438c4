"""Expected collective molecular signal from a Poisson field of transmitters.

Three engines compute the signal at a spherical receiver and check each other:

* :mod:`mcstogeo.expectation` evaluates the expectations analytically,
* :mod:`mcstogeo.montecarlo` averages exact responses over sampled placements,
* :mod:`mcstogeo.particle` tracks individual Brownian molecules.
"""

from .core import (
    DomainError,
    Environment,
    ReceiverKind,
    ReceiverSpec,
    SamplingScheme,
    Scenario,
    ScenarioError,
    TransmitterField,
    validate_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "Environment",
    "ReceiverKind",
    "ReceiverSpec",
    "SamplingScheme",
    "Scenario",
    "ScenarioError",
    "TransmitterField",
    "validate_scenario",
    "__version__",
]
