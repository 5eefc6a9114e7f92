"""crowdgrid: two-phase crowdsourced-energy-system operation on a radial
feeder, coupled to a permissioned hash-chained trade ledger."""

__version__ = "0.1.0"
