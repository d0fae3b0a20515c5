# Makes 'jobs' a sub-package of 'app'.
from .scenarios import SCENARIOS, churn, list_scenarios, oracle_mismatches, run_scenario
