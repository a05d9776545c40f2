//! One training run: the epoch loop, bound evaluation on a cadence, region
//! tracking, plateau and stop detection, and operator commands.
//!
//! The trainer and the bound engine never talk to each other. Per epoch the
//! trainer receives a learning rate and nothing else; when guidance is on,
//! that rate may be scaled by the guidance hook, which sees only the scalar
//! distance of the loss above the cloud bottom.

use std::collections::VecDeque;
use std::fs;
use std::time::Instant;

use serde::Serialize;
use yescert_core::monitor::{plateau_detector, stop_rule};
use yescert_core::tasks::{
    gen_denoising, gen_phase_retrieval, gen_quadratic_image, mnist_dataset, success_rate, synthetic_digits, GrayImage,
    ImagePatchPlan,
};
use yescert_core::{
    classify_region, forward, guidance_distance, guidance_hook, init_params, loss_mse, BoundConfig, BoundEngine,
    CloudRegion, ControlAction, Dataset, EpochEvent, EpochRecord, LrSchedule, Matrix, MlpParams, OptimizerState,
    StopReason, Trainer, YesBoundSet,
};

use crate::config::{SessionConfig, TaskSpec};
use crate::control::Controller;
use crate::error::{Result, RunError};
use crate::pgm::read_pgm;
use crate::runlog::{RunEnd, RunLogWriter};

/// A dataset plus digit labels for classification tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub dataset: Dataset,
    pub labels: Option<Vec<u8>>,
}

pub fn build_task(spec: &TaskSpec) -> Result<TaskData> {
    let unlabeled = |dataset| TaskData { dataset, labels: None };
    Ok(match spec {
        &TaskSpec::PhaseRetrieval { n, d, seed } => unlabeled(gen_phase_retrieval(n, d, seed)?),
        &TaskSpec::Denoising { n, num_signals, noise_per_signal, noise, noise_scale, seed } => {
            unlabeled(gen_denoising(n, num_signals, noise_per_signal, noise, noise_scale, seed)?)
        }
        TaskSpec::QuadraticImage { image, patch_size, sensing, seed, noise_std } => {
            let img = match image {
                Some(path) => read_pgm(path)?,
                None => GrayImage::test_pattern(128, 128),
            };
            let plan = ImagePatchPlan {
                patch_size: *patch_size,
                sensing: *sensing,
                sensing_seed: *seed,
                noise_std: *noise_std,
            };
            unlabeled(gen_quadratic_image(&img, &plan)?)
        }
        TaskSpec::Mnist { images, labels, count } => {
            let img = fs::read(images).map_err(|e| RunError::io(images, e))?;
            let lab = fs::read(labels).map_err(|e| RunError::io(labels, e))?;
            let l = mnist_dataset(&img, &lab, *count)?;
            TaskData { dataset: l.dataset, labels: Some(l.labels) }
        }
        &TaskSpec::MnistSynthetic { samples, jitter, seed } => {
            let l = synthetic_digits(samples, jitter, seed)?;
            TaskData { dataset: l.dataset, labels: Some(l.labels) }
        }
    })
}

/// Receives every record as it is produced, then the end marker.
pub trait RecordSink {
    fn record(&mut self, record: &EpochRecord) -> Result<()>;

    fn finish(&mut self, _end: &RunEnd) -> Result<()> {
        Ok(())
    }
}

impl RecordSink for RunLogWriter {
    fn record(&mut self, record: &EpochRecord) -> Result<()> {
        self.append(record)
    }

    fn finish(&mut self, end: &RunEnd) -> Result<()> {
        RunLogWriter::finish(self, end)
    }
}

impl RecordSink for Vec<EpochRecord> {
    fn record(&mut self, record: &EpochRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Called on every freshly computed bound set before it is used.
pub type BoundTap = Box<dyn FnMut(&mut YesBoundSet) + Send>;

/// What `run` prints when it finishes.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunSummary {
    pub task: String,
    pub epochs: u64,
    pub final_region: Option<CloudRegion>,
    pub first_yellow_epoch: Option<u64>,
    pub first_green_epoch: Option<u64>,
    pub final_loss: Option<f64>,
    pub final_success_rate: Option<f64>,
    pub stop_reason: Option<StopReason>,
    pub diverged: bool,
}

pub struct Session {
    config: SessionConfig,
    data: TaskData,
    engine: BoundEngine,
    trainer: Trainer,
    schedule: LrSchedule,
    max_degree: usize,
    guidance_on: bool,
    guidance_d: Option<f64>,
    lr_override: Option<f64>,
    control: Controller,
    epoch: u64,
    region: Option<CloudRegion>,
    window: VecDeque<EpochRecord>,
    window_len: usize,
    in_plateau: bool,
    bound_tap: Option<BoundTap>,
    started: Instant,
    end: Option<RunEnd>,
    summary: RunSummary,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("task", &self.config.task.name()).field("epoch", &self.epoch).finish()
    }
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let data = build_task(&config.task)?;
        Self::with_data(config, data)
    }

    /// Session over an already built dataset.
    pub fn with_data(config: SessionConfig, data: TaskData) -> Result<Self> {
        config.validate()?;
        let ds = &data.dataset;
        let (dims, acts, bias) = config.network.resolve(&config.task, ds.input_dim(), ds.output_dim())?;
        if config.batch_size > ds.len() {
            return Err(RunError::config(
                "batch_size",
                format!("batch size {} exceeds the {} samples", config.batch_size, ds.len()),
            ));
        }
        let depth = acts.len();
        let max_degree = config.bounds.max_degree.unwrap_or(depth - 1);
        if max_degree > depth - 1 {
            return Err(RunError::config(
                "bounds.max_degree",
                format!("{max_degree} exceeds depth - 1 = {}", depth - 1),
            ));
        }
        let params = init_params(&dims, bias, &acts, config.seed)?;
        let optimizer = OptimizerState::new(config.optimizer.kind, params.param_count());
        let trainer = Trainer::new(params, optimizer, config.batch_size, config.seed)?;
        let opt = &config.optimizer;
        let schedule = LrSchedule::new(opt.lr, opt.decay_factor, opt.decay_period)?;
        let bound_config = BoundConfig { activations: acts, use_bias: bias, rcond: config.bounds.rcond };
        let engine = BoundEngine::new(ds.x.clone(), ds.y.clone(), bound_config)?;
        let window_len = config.stop.plateau.window.max(config.stop.rule.as_ref().map_or(0, |r| r.window));
        let summary = RunSummary { task: config.task.name().into(), ..Default::default() };
        let mut s = Self {
            guidance_on: config.guidance.enabled,
            config,
            data,
            engine,
            trainer,
            schedule,
            max_degree,
            guidance_d: None,
            lr_override: None,
            control: Controller::new(),
            epoch: 0,
            region: None,
            window: VecDeque::new(),
            window_len,
            in_plateau: false,
            bound_tap: None,
            started: Instant::now(),
            end: None,
            summary,
        };
        if s.config.max_epochs == 0 {
            s.finish(StopReason::MaxEpochs);
        }
        Ok(s)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn data(&self) -> &TaskData {
        &self.data
    }

    pub fn params(&self) -> &MlpParams {
        self.trainer.params()
    }

    pub fn controller(&self) -> Controller {
        self.control.clone()
    }

    /// Completed epochs.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn end(&self) -> Option<RunEnd> {
        self.end
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }

    pub fn set_bound_tap(&mut self, tap: BoundTap) {
        self.bound_tap = Some(tap);
    }

    /// Forces the learning rate, bypassing the schedule and guidance. Unlike
    /// the operator command this accepts 0, which freezes the weights.
    pub fn set_lr_override(&mut self, lr: Option<f64>) {
        self.lr_override = lr;
    }

    fn finish(&mut self, reason: StopReason) {
        self.end = Some(RunEnd { reason, last_epoch: self.epoch });
        self.summary.stop_reason = Some(reason);
        self.summary.diverged = reason == StopReason::Diverged;
        self.control.close();
    }

    fn is_cadence_epoch(&self, epoch: u64) -> bool {
        (epoch - 1).is_multiple_of(self.config.bounds.cadence)
    }

    fn bounds_for(&self, layer_outputs: &[Matrix]) -> Result<YesBoundSet> {
        if self.max_degree == 0 {
            let yes0 = self.engine.yes0_trace()?.bound;
            return Ok(YesBoundSet {
                yes0,
                yes_k: Vec::new(),
                cloud_top: yes0,
                cloud_bottom: yes0,
                best_checkpoints: Default::default(),
            });
        }
        Ok(self.engine.bound_set(layer_outputs, self.max_degree, self.config.bounds.monotone)?)
    }

    /// Runs one epoch. Returns `None` once the run has ended; a Stop drained
    /// at the boundary ends the run without training another epoch.
    pub fn step(&mut self) -> Result<Option<EpochRecord>> {
        if self.end.is_some() {
            return Ok(None);
        }
        let n = self.epoch + 1;
        let drained = self.control.begin_epoch(n);
        let mut events = Vec::new();
        for cmd in &drained.commands {
            match cmd.action {
                ControlAction::SetLearningRate(lr) => self.schedule.restart(lr, n - 1),
                ControlAction::ToggleGuidance(on) => {
                    self.guidance_on = on;
                    if !on {
                        self.guidance_d = None;
                    }
                }
                ControlAction::Pause | ControlAction::Resume | ControlAction::Stop => {}
            }
            events.push(EpochEvent::ControlApplied { command: cmd.action });
        }
        if drained.stop {
            self.finish(StopReason::Operator);
            return Ok(None);
        }

        let base_lr = self.schedule.lr_at(n - 1);
        let lr = match (self.lr_override, self.guidance_on, self.guidance_d) {
            (Some(forced), _, _) => forced,
            (None, true, Some(d)) => guidance_hook(d, base_lr, &self.config.guidance.rule()),
            _ => base_lr,
        };

        let ds = &self.data.dataset;
        let step = self.trainer.run_epoch(&ds.x, &ds.y, lr);
        let weight_change = match step {
            Ok(w) => Some(w),
            Err(yescert_core::Error::TrainingFault(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let fp = forward(self.trainer.params(), &ds.x)?;
        let loss = loss_mse(fp.output(), &ds.y)?;
        let success = self.data.labels.as_ref().map(|l| success_rate(fp.output(), l));
        self.epoch = n;

        let diverged =
            weight_change.is_none() || !loss.is_finite() || !self.trainer.params().iter().all(|v| v.is_finite());
        let mut record = EpochRecord {
            epoch: n,
            train_loss: loss,
            bounds: None,
            region: CloudRegion::Red,
            region_stale: false,
            lr,
            weight_change: weight_change.unwrap_or(f64::NAN),
            guidance_active: self.guidance_on,
            success_rate: success,
            wall_time_ms: self.started.elapsed().as_millis() as u64,
            events,
        };
        if diverged {
            record.events.push(EpochEvent::Diverged);
            record.events.push(EpochEvent::Stopped { reason: StopReason::Diverged });
            self.finish(StopReason::Diverged);
            self.note(&record);
            return Ok(Some(record));
        }

        if self.is_cadence_epoch(n) {
            let mut bounds = self.bounds_for(fp.hidden_and_output())?;
            if let Some(tap) = self.bound_tap.as_mut() {
                tap(&mut bounds);
            }
            let region = classify_region(loss, &bounds);
            if self.region != Some(region) {
                record.events.push(EpochEvent::EnteredRegion { region });
            }
            self.region = Some(region);
            record.region = region;
            if self.guidance_on {
                self.guidance_d = Some(guidance_distance(loss, &bounds));
            }
            record.bounds = Some(bounds);
        } else {
            record.region = self.region.unwrap_or(CloudRegion::Red);
            record.region_stale = true;
        }

        self.window.push_back(record.clone());
        while self.window.len() > self.window_len {
            self.window.pop_front();
        }
        let window = self.window.make_contiguous();
        let plateau = &self.config.stop.plateau;
        match plateau_detector(window, plateau.rel_threshold, plateau.window) {
            Some(ev) if !self.in_plateau => {
                self.in_plateau = true;
                record.events.push(ev);
            }
            Some(_) => {}
            None => self.in_plateau = false,
        }
        let stop_now =
            self.config.stop.rule.as_ref().is_some_and(|rule| {
                window.len() >= rule.window && stop_rule(&window[window.len() - rule.window..], rule)
            });
        if stop_now {
            record.events.push(EpochEvent::Stopped { reason: StopReason::StopRule });
            self.finish(StopReason::StopRule);
        } else if n >= self.config.max_epochs {
            record.events.push(EpochEvent::Stopped { reason: StopReason::MaxEpochs });
            self.finish(StopReason::MaxEpochs);
        }
        self.note(&record);
        Ok(Some(record))
    }

    fn note(&mut self, r: &EpochRecord) {
        let s = &mut self.summary;
        s.epochs = r.epoch;
        s.final_loss = Some(r.train_loss);
        s.final_region = Some(r.region);
        s.final_success_rate = r.success_rate;
        if r.region == CloudRegion::Yellow && s.first_yellow_epoch.is_none() {
            s.first_yellow_epoch = Some(r.epoch);
        }
        if r.region == CloudRegion::Green && s.first_green_epoch.is_none() {
            s.first_green_epoch = Some(r.epoch);
        }
    }

    /// Steps until the run ends, handing every record to each sink.
    pub fn run(&mut self, sinks: &mut [&mut dyn RecordSink]) -> Result<RunSummary> {
        while let Some(record) = self.step()? {
            for sink in sinks.iter_mut() {
                sink.record(&record)?;
            }
        }
        let end = self.end.expect("run ended");
        for sink in sinks.iter_mut() {
            sink.finish(&end)?;
        }
        Ok(self.summary.clone())
    }
}
