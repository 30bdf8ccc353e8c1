"""Error-bounded trajectory summaries and queries over them."""
from .builder import SummaryBuilder, summarize
from .core import Config, StreamBatch, Summary, Trajectory, TrajectoryPoint, summary_size_bytes

__all__ = ["Config", "StreamBatch", "Summary", "SummaryBuilder", "Trajectory", "TrajectoryPoint",
           "summarize", "summary_size_bytes"]
__version__ = "0.1.0"
