"""Exception types raised by the solver, simulator, and scenario loader."""


class EtMarketError(Exception):
    """Base class for all package errors."""


class QuadratureFailure(EtMarketError):
    """Numerical integration did not reach the requested tolerance."""


class DivergentValuation(EtMarketError):
    """A buyer's maximal price is unbounded."""


class ZeroMevMarket(EtMarketError):
    """The holdings-weighted winner mean is zero, so capture is undefined."""


class InvalidPartition(EtMarketError):
    """Investor set is empty, unknown, or covers every buyer."""


class MissingPbsConfig(EtMarketError):
    """A PBS operation was requested on a market without a PBS config."""


class InvalidHoldings(EtMarketError):
    """Holdings do not sum to the ticket supply."""


class InsufficientData(EtMarketError):
    """Too few observations for a statistical test."""


class ParseError(EtMarketError):
    """Scenario file is not valid JSON."""


class SchemaError(EtMarketError):
    """Scenario file does not match the documented schema."""


class ValidationError(EtMarketError, ValueError):
    """A model invariant is violated (e.g. negative cost of capital)."""
