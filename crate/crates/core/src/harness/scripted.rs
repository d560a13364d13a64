//! Deterministic sensors and workloads for tests and dry runs.

use std::sync::{Arc, Mutex};

use super::{Readings, SensorProvider, WorkResult, Workload};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// A stabilization poll (one CPU read).
    Poll,
    /// A measurement window opened.
    Window,
    Forward(u32),
}

/// Shared call log used to assert call order across sensors and workloads.
#[derive(Debug, Clone, Default)]
pub struct EventLog(Arc<Mutex<Vec<Event>>>);

impl EventLog {
    pub fn push(&self, e: Event) {
        self.0.lock().expect("event log poisoned").push(e);
    }

    pub fn take(&self) -> Vec<Event> {
        std::mem::take(&mut *self.0.lock().expect("event log poisoned"))
    }
}

/// Replays a list of readings, one per poll, repeating the last one.
#[derive(Debug, Clone)]
pub struct ScriptedSensors {
    script: Vec<Readings>,
    next: usize,
    current: Readings,
    power_w: f64,
    peak_memory_mb: f64,
    temp_fails: bool,
    log: Option<EventLog>,
}

impl ScriptedSensors {
    pub fn constant(readings: Readings) -> Self {
        Self::scripted(vec![readings])
    }

    pub fn scripted(script: Vec<Readings>) -> Self {
        assert!(!script.is_empty(), "sensor script must not be empty");
        let current = script[0];
        Self {
            script,
            next: 0,
            current,
            power_w: 1.0,
            peak_memory_mb: 64.0,
            temp_fails: false,
            log: None,
        }
    }

    pub fn with_power(mut self, watts: f64) -> Self {
        self.power_w = watts;
        self
    }

    pub fn with_peak_memory(mut self, mb: f64) -> Self {
        self.peak_memory_mb = mb;
        self
    }

    pub fn failing_temperature(mut self) -> Self {
        self.temp_fails = true;
        self
    }

    pub fn logging(mut self, log: EventLog) -> Self {
        self.log = Some(log);
        self
    }
}

impl SensorProvider for ScriptedSensors {
    fn cpu_util(&mut self) -> Result<f64> {
        self.current = self.script[self.next.min(self.script.len() - 1)];
        self.next += 1;
        if let Some(log) = &self.log {
            log.push(Event::Poll);
        }
        Ok(self.current.cpu_util)
    }

    fn ram_util(&mut self) -> Result<f64> {
        Ok(self.current.ram_util)
    }

    fn cpu_temp_c(&mut self) -> Result<f64> {
        if self.temp_fails {
            return Err(Error::Sensor {
                sensor: "cpu_temp_c",
                message: "scripted failure".into(),
            });
        }
        Ok(self.current.temp_c)
    }

    fn power_w(&mut self) -> Result<f64> {
        Ok(self.power_w)
    }

    fn begin_window(&mut self) -> Result<()> {
        if let Some(log) = &self.log {
            log.push(Event::Window);
        }
        Ok(())
    }

    fn peak_memory_mb(&mut self) -> Result<f64> {
        Ok(self.peak_memory_mb)
    }
}

/// Workload with latency `base_ms + per_sample_ms * batch_size`.
#[derive(Debug, Clone)]
pub struct ScriptedWorkload {
    base_ms: f64,
    per_sample_ms: f64,
    accuracy: f64,
    confusion: Option<Vec<Vec<u64>>>,
    fail_at: Option<u32>,
    log: Option<EventLog>,
}

impl ScriptedWorkload {
    pub fn linear(base_ms: f64, per_sample_ms: f64) -> Self {
        Self {
            base_ms,
            per_sample_ms,
            accuracy: 1.0,
            confusion: None,
            fail_at: None,
            log: None,
        }
    }

    pub fn with_accuracy(mut self, accuracy: f64) -> Self {
        self.accuracy = accuracy;
        self
    }

    pub fn with_confusion(mut self, confusion: Vec<Vec<u64>>) -> Self {
        self.confusion = Some(confusion);
        self
    }

    /// Fail every forward pass with this batch size.
    pub fn failing_at(mut self, batch_size: u32) -> Self {
        self.fail_at = Some(batch_size);
        self
    }

    pub fn logging(mut self, log: EventLog) -> Self {
        self.log = Some(log);
        self
    }
}

impl Workload for ScriptedWorkload {
    fn forward(&mut self, batch_size: u32) -> Result<WorkResult> {
        if let Some(log) = &self.log {
            log.push(Event::Forward(batch_size));
        }
        if self.fail_at == Some(batch_size) {
            return Err(Error::invalid(format!("scripted failure at batch size {batch_size}")));
        }
        Ok(WorkResult {
            latency_ms: self.base_ms + self.per_sample_ms * batch_size as f64,
            correct: (self.accuracy * batch_size as f64).round() as u64,
            total: batch_size as u64,
            confusion: self.confusion.clone(),
        })
    }

    fn description(&self) -> String {
        format!(
            "scripted linear workload ({} + {}*batch ms)",
            self.base_ms, self.per_sample_ms
        )
    }
}
