from zoosel.harness.config import BenchmarkConfig
from zoosel.harness.ingest import IngestError, IngestResult, ingest_csv, read_task_csv, write_task_csv
from zoosel.harness.pipeline import PipelineError, RunReport, aggregate, build_suite, full_forward, run_pipeline
from zoosel.harness.sequential import SequentialReport, sequential_release_eval
from zoosel.harness.timing import TimingReport, timing_report
from zoosel.harness.zoos import default_zoo, six_model_zoo, variant_zoo

__all__ = [
    "BenchmarkConfig",
    "IngestError",
    "IngestResult",
    "PipelineError",
    "RunReport",
    "SequentialReport",
    "TimingReport",
    "aggregate",
    "build_suite",
    "default_zoo",
    "full_forward",
    "ingest_csv",
    "read_task_csv",
    "run_pipeline",
    "sequential_release_eval",
    "six_model_zoo",
    "timing_report",
    "variant_zoo",
    "write_task_csv",
]
