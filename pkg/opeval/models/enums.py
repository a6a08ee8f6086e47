from enum import Enum


class MetricName(Enum):
    OPC = "OPC"
    SOFT_OPC = "SoftOPC"
    TD_ERR = "TDErr"
    SUM_ADV = "SumAdv"
    MCC_ERR = "MCCErr"
    EXT_OPC = "ExtOPC"


class Orientation(Enum):
    HIGHER_BETTER = "higher-better"
    LOWER_BETTER = "lower-better"


ORIENTATIONS = {
    MetricName.OPC: Orientation.HIGHER_BETTER,
    MetricName.SOFT_OPC: Orientation.HIGHER_BETTER,
    MetricName.EXT_OPC: Orientation.HIGHER_BETTER,
    MetricName.TD_ERR: Orientation.LOWER_BETTER,
    MetricName.MCC_ERR: Orientation.LOWER_BETTER,
    MetricName.SUM_ADV: Orientation.LOWER_BETTER,
}

# Row order of correlation summaries
BINARY_METRICS = (
    MetricName.TD_ERR,
    MetricName.SUM_ADV,
    MetricName.MCC_ERR,
    MetricName.OPC,
    MetricName.SOFT_OPC,
)


class PolicyKind(Enum):
    ARGMAX = "argmax"
    UNIFORM = "uniform"
    EPSILON_GREEDY = "epsilon_greedy"


class Weighting(Enum):
    TRANSITION = "transition"
    EPISODE = "episode"


class AdvantageStart(Enum):
    ALL = "all"
    FIRST = "first"


class QDistribution(Enum):
    UNIFORM = "uniform"
    PER_INDEX = "per_index"


class Feasibility(Enum):
    FEASIBLE = "feasible"
    CATASTROPHIC = "catastrophic"
