"""Learning time-dependent Kohn-Sham energy functionals from orbital dynamics."""

__version__ = "0.1.0"
