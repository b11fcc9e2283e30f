"""Configuration settings for the DSM scheduling and feeder analysis system."""

from pathlib import Path

BASE_DIR = Path(__file__).parent

# Project paths
DATA_DIR = BASE_DIR / "data"
OUTPUT_DIR = BASE_DIR / "output"
REFERENCE_SCENARIO_PATH = DATA_DIR / "ref30.json"

PACKAGE_VERSION = "1.0.0"

# Time grid
SLOTS_PER_DAY = 48
SLOT_HOURS = 0.5

# Penalty prices (cents/kWh)
DEFAULT_RESIDENTIAL_PENALTY = 0.0
DEFAULT_COMMERCIAL_PENALTIES = {
    'low': 0.0,
    'med': 1.0,
    'high': 3.0,
}

# Optimizer settings
OPTIMIZER_MAX_PASSES = 50
OPTIMIZER_EPSILON = 1e-9  # Minimum objective decrease (cents) per pass
BRUTE_FORCE_SEARCH_CAP = 10 ** 7
COST_TIE_TOLERANCE = 1e-9  # Placements within this many cents are ties

# Feasibility checks
FEASIBILITY_TOLERANCE_KW = 1e-9

# Load flow settings
LOADFLOW_TOLERANCE = 1e-8  # Max per-bus |dV| in pu
LOADFLOW_MAX_ITER = 100
LOAD_POWER_FACTOR = 0.95  # Lagging, applied to consumption only
DEFAULT_BASE_KV = 0.4
DEFAULT_BASE_MVA = 0.1
SLACK_VOLTAGE_PU = 1.0

# Study layout
PV_PEAK_HOURS = (12.0, 14.0)  # Clock window for the commercial-bus voltage peak

# Runner settings
SWEEP_AXES = [
    'penalty_residential',
    'participation_pct',
    'pv_scale',
    'resistance_scale',
    'commercial_load_scale',
]
COMMERCIAL_FULL_PARTICIPATION_ONLY = True

# Output formatting
OUTPUT_SIGNIFICANT_DIGITS = 6

# Result files
SUMMARY_FILE = "summary.json"
COSTS_FILE = "costs.csv"
VOLTAGES_FILE = "voltages.csv"
LOSSES_FILE = "losses.csv"
SCHEDULES_FILE = "schedules.csv"
CRITICALITY_FILE = "criticality.csv"
SWEEP_FILE = "sweep.csv"

COSTS_COLUMNS = [
    'customer_id', 'kind', 'baseline_cents', 'optimized_cents',
    'reduction_pct', 'penalty_cents',
]
LOSSES_COLUMNS = ['run', 'slot', 'loss_kw']
SCHEDULES_COLUMNS = [
    'customer_id', 'appliance_id', 'flexibility', 'criticality',
    'baseline_slots', 'optimized_slots', 'shift_slots',
]
CRITICALITY_COLUMNS = [
    'customer_id', 'criticality', 'penalty_cents_per_kwh', 'shifted_appliances',
    'shift_slots', 'tariff_saving_cents', 'penalty_cents',
]
SWEEP_COLUMNS = [
    'axis', 'value', 'pv_utilization_residential_pct', 'pv_utilization_commercial_pct',
    'pv_utilization_overall_pct', 'cost_reduction_residential_pct',
    'cost_reduction_commercial_pct', 'daily_loss_kwh', 'loss_reduction_pct',
    'no_pv_daily_loss_kwh', 'loss_reduction_vs_no_pv_pct', 'max_voltage_pu',
    'min_voltage_pu', 'commercial_bus_peak_voltage_pu',
]

# Display
DISPLAY_WIDTH = 70
