"""Reference datasets and design settings used throughout the examples."""

from .types import HistoricalDataset, ParameterSpaces

# Six historical control studies simulated at rates 0.4 / 0.3.
SIMULATION_HISTORY = HistoricalDataset.from_arrays(
    n=[100, 100, 200, 200, 300, 300],
    r=[
        [33, 41, 78, 81, 115, 113],
        [31, 28, 69, 68, 94, 97],
    ],
)

# Secukinumab 300 mg arms of ERASURE, FIXTURE and JUNCTURE (PASI 75, MIGA 0/1).
CASE_STUDY_HISTORY = HistoricalDataset.from_arrays(
    n=[245, 323, 60],
    r=[
        [200, 249, 52],
        [160, 202, 44],
    ],
)
CASE_STUDY_STUDY_NAMES = ("ERASURE", "FIXTURE", "JUNCTURE")

SIMULATION_SPACES = ParameterSpaces(
    control_space=((0.2, 0.7), (0.1, 0.6)),
    effect_space=((-0.1, 0.2), (-0.1, 0.2)),
)

CASE_STUDY_PUBLISHED_SPACES = ParameterSpaces(
    control_space=((0.65, 0.95), (0.5, 0.8)),
    effect_space=((-0.1, 0.1), (-0.1, 0.1)),
)

# Endpoint-1 effects are capped at 0.05 so that treatment rates stay inside
# (0, 1) when the control rate is near its 0.95 upper limit.
CASE_STUDY_SPACES = ParameterSpaces(
    control_space=((0.65, 0.95), (0.5, 0.8)),
    effect_space=((-0.1, 0.05), (-0.1, 0.1)),
)

# (control rate 1, control rate 2, effect 1, effect 2) rows of the
# operating-characteristics table for the simulation setting.
SIMULATION_TABLE_ROWS = (
    (0.3, 0.2, 0.0, 0.0),
    (0.4, 0.3, 0.0, 0.0),
    (0.5, 0.4, 0.0, 0.0),
    (0.4, 0.3, 0.1, 0.0),
    (0.4, 0.3, 0.0, 0.1),
    (0.3, 0.2, 0.1, 0.1),
    (0.3, 0.2, 0.12, 0.12),
    (0.4, 0.3, 0.1, 0.1),
    (0.4, 0.3, 0.12, 0.12),
    (0.5, 0.4, 0.1, 0.1),
    (0.5, 0.4, 0.12, 0.12),
)

CASE_STUDY_SCENARIOS = {
    "S1": (0.7, 0.55),
    "S2": (0.9, 0.75),
    "S3": (0.8, 0.65),
}
