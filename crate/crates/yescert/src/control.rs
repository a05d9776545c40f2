//! Operator command queue.
//!
//! Commands are queued from any thread and drained by the training loop at
//! the boundary before each epoch. The epoch counter used for
//! acknowledgements lives under the same lock as the queue, so an
//! acknowledgement always names the epoch the command will actually apply to.

use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use yescert_core::{ControlAction, ControlCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Ack {
    /// Last epoch started (or finished) when the command was queued.
    pub ack_epoch: u64,
    /// The command is applied before this epoch runs.
    pub applies_at_epoch: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SubmitError {
    #[error("{0}")]
    Invalid(String),
    #[error("session has stopped")]
    Stopped,
}

#[derive(Debug, Default)]
struct Queue {
    pending: Vec<ControlCommand>,
    next_epoch: u64,
    paused: bool,
    closed: bool,
}

#[derive(Debug, Default)]
struct Shared {
    queue: Mutex<Queue>,
    wake: Condvar,
}

/// Cloneable handle to one session's command queue.
#[derive(Debug, Clone, Default)]
pub struct Controller {
    shared: Arc<Shared>,
}

/// Commands drained at one epoch boundary, in arrival order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Drained {
    pub commands: Vec<ControlCommand>,
    pub stop: bool,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Controller {
    pub fn new() -> Self {
        let c = Self::default();
        c.lock().next_epoch = 1;
        c
    }

    fn lock(&self) -> MutexGuard<'_, Queue> {
        self.shared.queue.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn submit(&self, mut command: ControlCommand) -> Result<Ack, SubmitError> {
        command.validate().map_err(|e| SubmitError::Invalid(e.to_string()))?;
        let mut q = self.lock();
        if q.closed {
            return Err(SubmitError::Stopped);
        }
        command.issued_at_ms.get_or_insert_with(now_ms);
        q.pending.push(command);
        let ack = Ack { ack_epoch: q.next_epoch - 1, applies_at_epoch: q.next_epoch };
        drop(q);
        self.shared.wake.notify_all();
        Ok(ack)
    }

    pub fn is_paused(&self) -> bool {
        self.lock().paused
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Drains the queue before `epoch`. Blocks while paused; a Stop ends the
    /// wait and closes the queue.
    pub fn begin_epoch(&self, epoch: u64) -> Drained {
        let mut q = self.lock();
        q.next_epoch = epoch;
        let mut out = Drained::default();
        loop {
            for cmd in std::mem::take(&mut q.pending) {
                match cmd.action {
                    ControlAction::Pause => q.paused = true,
                    ControlAction::Resume => q.paused = false,
                    ControlAction::Stop => out.stop = true,
                    _ => {}
                }
                out.commands.push(cmd);
            }
            if out.stop {
                q.closed = true;
                q.paused = false;
                return out;
            }
            if !q.paused {
                break;
            }
            q = self.shared.wake.wait(q).unwrap_or_else(|p| p.into_inner());
        }
        q.next_epoch = epoch + 1;
        out
    }

    /// Rejects further commands. Called when the run ends for any reason.
    pub fn close(&self) {
        self.lock().closed = true;
        self.shared.wake.notify_all();
    }
}
