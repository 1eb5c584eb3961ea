"""nowbench: a GDP nowcasting benchmark harness.

Simulated data vintages, twelve model families behind one fit/predict
contract, and the ratio-table / revision / aggregate-score evaluation
protocol, driven by the `nowbench` CLI.
"""

from .data_ingest import (
    Manifest,
    Panel,
    SeriesMeta,
    SplitSpec,
    TimeSeries,
    availability_filter,
    build_panel,
    fetch_series,
    load_growth_panel,
    load_manifest,
    split,
    to_growth,
)
from .errors import (
    CacheError,
    DataError,
    EstimationError,
    NowbenchError,
    NumericalError,
    SchemaError,
    UnknownSeriesError,
)
from .evaluation import (
    PredictionCube,
    aggregate_score,
    avg_revision,
    mae,
    minmax_scale,
    ratio_table,
    rmse,
)
from .model_api import (
    BACKENDS,
    METHODOLOGIES,
    FittedModel,
    ModelSpec,
    PredictionRecord,
    fit,
    predict,
    tune,
)
from .preprocess import (
    DesignMatrix,
    DesignMatrixBuilder,
    ImputePolicy,
    PanelScaler,
    aggregate_quarterly,
    arma_fill,
    build_design_matrix,
    mean_fill,
    stack_monthly,
    standardize,
)
from .vintage_sim import (
    VINTAGE_OFFSETS,
    VintageView,
    mask_vintage,
    publication_cutoff,
    vintage_grid,
)

__version__ = "0.1.0"
