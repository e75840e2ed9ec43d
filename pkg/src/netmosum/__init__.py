"""Communication-efficient online changepoint detection for sensor networks.

Each sensor maintains a moving-sum statistic over its own stream; statistics
crossing a local threshold are transmitted to a fusion centre, which alarms
when the weighted root-sum-square of the received statistics crosses a global
threshold.  Thresholds for a target false-alarm probability come from Monte
Carlo simulation of the Gaussian limit process, and an experiment harness
measures delay, transmission cost, and false alarms on synthetic scenarios.
"""

from .calibration import (
    LimitGrid,
    SupSamples,
    critical_value_centralized,
    critical_value_distributed,
    critical_value_local,
    critical_value_table,
    empirical_null_thresholds,
    expected_transmission_fraction,
    simulate_z_paths,
    sup_samples,
)
from .detection import (
    DetectionOutcome,
    MessageBatch,
    MonitorConfig,
    SensorMonitor,
    global_statistic,
    iter_csv_rows,
    run_monitor,
    run_monitor_batch,
    step,
    stream_monitor,
)
from .errors import (
    DataFormatError,
    DegenerateTraining,
    InsufficientReps,
    InvalidScenario,
    NetmosumError,
    NonPositiveLRV,
    SearchRangeEmpty,
    SourceExhausted,
    TooShort,
    WindowNotFull,
)
from .experiments import (
    ExperimentReport,
    RepOutcome,
    autocorrelation_study,
    consistency_study,
    recover_bandwidth,
    run_experiment,
    run_replications,
    threshold_sweep,
    training_size_study,
    transmission_profile,
)
from .simulate import Scenario, generate
from .stats import (
    LOG_WEIGHT,
    Baseline,
    Kernel,
    LocalWindow,
    WeightFn,
    estimate_baseline,
    estimate_lrv,
    kernel_weight,
    local_statistic,
    weight,
)

__version__ = "0.1.0"
