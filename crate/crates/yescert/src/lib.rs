//! Std companion to `yescert-core`: configuration files, sessions with run
//! logs, SVG plots, the HTTP monitor and the `yescert` command line.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod error;
pub mod pgm;
pub mod plot;
pub mod runlog;
pub mod server;
pub mod session;

pub use config::{Overrides, SessionConfig, TaskSpec};
pub use control::{Ack, Controller, SubmitError};
pub use error::{exit, Result, RunError};
pub use plot::{render_svg, PlotOptions};
pub use runlog::{parse_run_log, read_run_log, RunEnd, RunLog, RunLogWriter};
pub use server::{bind, spawn, MonitorHandle, ServeOptions};
pub use session::{build_task, RecordSink, RunSummary, Session, TaskData};
