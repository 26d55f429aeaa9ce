"""Default constants for window generation, fitting, learning and trading."""

import math

# Window generation (calendar days)
WINDOW_RULES = {
    "dt1_step": 50,
    "dt2_step": 50,
    "dt_min": 110,
    "dt_max": 1500,
}

# LPPL search space; t_c upper bound is t2 + TC_FACTOR * (t2 - t1)
PARAM_BOUNDS = {
    "m": (0.001, 0.999),
    "omega": (0.01, 40.0),
    "phi": (0.001, 2 * math.pi),
}
TC_FACTOR = 0.375
OMEGA_FILTER_MAX = 20.0

# Tabu + Levenberg-Marquardt budget
OPTIMIZER = {
    "tabu_iterations": 60,
    "tabu_neighbors": 16,
    "tabu_list_size": 40,
    "lm_max_iterations": 60,
    "lm_tolerance": 1e-10,
    "seed": 0,
    "restarts": 3,
}

# Parameters used to build informative parameters, in IP index order j = 1..6
PATTERN_PARAMS = ["m", "omega", "phi", "B", "b", "q"]
NUM_GROUPS = 14
GROUP_WIDTH = 100

REBOUND_HALF_WIDTH = 200
NEAR_DAYS = 10
KS_THRESHOLD = 0.05
KDE_GRID_POINTS = 512
KDE_PAD_BANDWIDTHS = 3.0

LEARNING_CUTOFF = "1975-01-01"
PREDICTION_END = "2009-07-22"
DATA_END = "2009-06-03"
PREDICTION_STEP = 50

QUALIFICATIONS = [(10, 200), (15, 200), (20, 200), (10, 500), (10, 1000)]

# Evaluation
ALARM_DURATION = 41
ALARM_OFFSET = 0
BAYES_START = "1985-01-01"
REBOUND_WIDTH = 21
BAYES_NEIGHBORHOOD = 20
LV_LOOKBACK = 50

# Trading: (Th, Os, Hp)
STRATEGIES = {
    "strategy_1": (0.2, 10, 10),
    "strategy_2": (0.7, 30, 10),
}
RANDOM_RUNS = 1000
COST_BPS = 0.0

# Output file names inside the output directory
OUTPUT_FILES = {
    "windows": "windows.csv",
    "fits": "fits.csv",
    "rebounds": "rebounds.csv",
    "informative": "informative_params.csv",
    "features": "features_{alpha}_{beta}.csv",
    "learning_alarms": "learning_alarms_{alpha}_{beta}.csv",
    "alarms": "alarms_{alpha}_{beta}.csv",
    "error_diagram": "error_diagram_{mode}_{alpha}_{beta}.csv",
    "bayes": "bayes_{alpha}_{beta}.csv",
    "bayes_average": "bayes_average.csv",
    "trades": "trades_{name}_{alpha}_{beta}.csv",
    "wealth": "wealth_{name}_{alpha}_{beta}.csv",
    "report": "report_{name}_{alpha}_{beta}.json",
    "manifest": "manifest.json",
}
