"""
denseval package

Evaluation toolkit for dense instance segmentation:
- label-map to polygon conversion (`application.conversion_service`)
- instance matching and metrics (`application.matching`)
- threshold sweeps (`application.sweeps`)
- error categorization (`application.error_analysis`)
- command-line entry point (`interfaces.cli`)
"""

__all__ = [
	"application",
	"domain",
	"geometry",
	"infrastructure",
	"interfaces",
	"config",
]

__version__ = "0.1.0"
