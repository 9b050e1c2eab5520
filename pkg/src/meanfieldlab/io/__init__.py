"""Run configuration, result files, checkpoints and plot scripts."""

from meanfieldlab.io.checkpoint import (
    CheckpointInfo,
    CheckpointKind,
    decode,
    describe,
    encode,
    load_checkpoint,
    save_checkpoint,
)
from meanfieldlab.io.config import (
    RunConfig,
    apply_overrides,
    parse_assignment,
    parse_config,
    serialize_config,
)
from meanfieldlab.io.plots import emit_plot_script
from meanfieldlab.io.records import (
    EventLog,
    event_log,
    read_events,
    read_records,
    save_events,
    save_report,
    write_records,
)

__all__ = [
    "CheckpointInfo",
    "CheckpointKind",
    "EventLog",
    "RunConfig",
    "apply_overrides",
    "decode",
    "describe",
    "emit_plot_script",
    "encode",
    "event_log",
    "load_checkpoint",
    "parse_assignment",
    "parse_config",
    "read_events",
    "read_records",
    "save_checkpoint",
    "save_events",
    "save_report",
    "serialize_config",
    "write_records",
]
