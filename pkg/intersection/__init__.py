"""Gap-acceptance capacity and queue-length analysis for unsignalized intersections."""

__version__ = '1.0.0'
