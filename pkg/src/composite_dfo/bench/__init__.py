"""Benchmark scoring, data profiles and the command-line driver."""
from .scoring import StationarityBundle, chi_profile, first_solved_eval, score_stationarity
