//! Sensors backed by the machine the harness runs on.
//!
//! CPU, RAM and temperature come from `sysinfo`. Power uses the Linux RAPL
//! energy counter when it is readable and reports 0 W otherwise. Peak memory
//! is the process resident high-water mark (`VmHWM`), reset at the start of
//! each window through `/proc/self/clear_refs`.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use sysinfo::{Components, System, MINIMUM_CPU_UPDATE_INTERVAL};

use super::SensorProvider;
use crate::error::{Error, Result};

const RAPL_ENERGY: &str = "/sys/class/powercap/intel-rapl:0/energy_uj";

pub struct HostSensors {
    system: System,
    components: Components,
    cpu_primed: bool,
    assumed_temp_c: Option<f64>,
    rapl: Option<PathBuf>,
    window: Option<Window>,
}

struct Window {
    started: Instant,
    energy_uj: Option<u64>,
    baseline_kb: u64,
    hwm_reset: bool,
}

impl Default for HostSensors {
    fn default() -> Self {
        Self::new()
    }
}

impl HostSensors {
    pub fn new() -> Self {
        let rapl = PathBuf::from(RAPL_ENERGY);
        Self {
            system: System::new(),
            components: Components::new_with_refreshed_list(),
            cpu_primed: false,
            assumed_temp_c: None,
            rapl: fs::read_to_string(&rapl).ok().map(|_| rapl),
            window: None,
        }
    }

    /// Temperature to report when the host exposes no thermal sensor.
    pub fn assume_temperature(mut self, celsius: f64) -> Self {
        self.assumed_temp_c = Some(celsius);
        self
    }

    pub fn has_power_meter(&self) -> bool {
        self.rapl.is_some()
    }

    fn energy_uj(&self) -> Option<u64> {
        let path = self.rapl.as_ref()?;
        fs::read_to_string(path).ok()?.trim().parse().ok()
    }
}

fn status_kb(field: &str) -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with(field))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

impl SensorProvider for HostSensors {
    fn cpu_util(&mut self) -> Result<f64> {
        if !self.cpu_primed {
            self.system.refresh_cpu_usage();
            std::thread::sleep(MINIMUM_CPU_UPDATE_INTERVAL);
            self.cpu_primed = true;
        }
        self.system.refresh_cpu_usage();
        Ok((self.system.global_cpu_usage() as f64 / 100.0).clamp(0.0, 1.0))
    }

    fn ram_util(&mut self) -> Result<f64> {
        self.system.refresh_memory();
        let total = self.system.total_memory();
        if total == 0 {
            return Err(Error::Sensor {
                sensor: "ram_util",
                message: "total memory reported as 0".into(),
            });
        }
        Ok(self.system.used_memory() as f64 / total as f64)
    }

    fn cpu_temp_c(&mut self) -> Result<f64> {
        self.components.refresh(false);
        let hottest = self
            .components
            .iter()
            .filter_map(|c| c.temperature())
            .filter(|t| t.is_finite())
            .fold(None, |acc: Option<f32>, t| Some(acc.map_or(t, |a| a.max(t))));
        match (hottest, self.assumed_temp_c) {
            (Some(t), _) => Ok(t as f64),
            (None, Some(t)) => Ok(t),
            (None, None) => Err(Error::Sensor {
                sensor: "cpu_temp_c",
                message: "no thermal sensor found on this host".into(),
            }),
        }
    }

    fn power_w(&mut self) -> Result<f64> {
        let Some(window) = &self.window else {
            return Ok(0.0);
        };
        match (window.energy_uj, self.energy_uj()) {
            (Some(start), Some(end)) if end >= start => {
                let secs = window.started.elapsed().as_secs_f64().max(1e-6);
                Ok((end - start) as f64 / 1e6 / secs)
            }
            _ => Ok(0.0),
        }
    }

    fn begin_window(&mut self) -> Result<()> {
        let hwm_reset = fs::write("/proc/self/clear_refs", "5").is_ok();
        let baseline_kb = status_kb("VmRSS:").unwrap_or(0);
        self.window = Some(Window {
            started: Instant::now(),
            energy_uj: self.energy_uj(),
            baseline_kb,
            hwm_reset,
        });
        Ok(())
    }

    fn peak_memory_mb(&mut self) -> Result<f64> {
        let Some(window) = &self.window else {
            return Err(Error::Sensor {
                sensor: "peak_memory_mb",
                message: "no measurement window open".into(),
            });
        };
        let field = if window.hwm_reset { "VmHWM:" } else { "VmRSS:" };
        let peak_kb = status_kb(field).ok_or_else(|| Error::Sensor {
            sensor: "peak_memory_mb",
            message: format!("could not read {field} from /proc/self/status"),
        })?;
        Ok(peak_kb.saturating_sub(window.baseline_kb) as f64 / 1024.0)
    }
}

#[cfg(all(test, target_os = "linux"))]
mod tests {
    use super::*;

    #[test]
    fn host_readings_are_in_range() {
        let mut s = HostSensors::new().assume_temperature(40.0);
        let cpu = s.cpu_util().unwrap();
        assert!((0.0..=1.0).contains(&cpu));
        let ram = s.ram_util().unwrap();
        assert!((0.0..=1.0).contains(&ram));
        assert!(s.cpu_temp_c().unwrap().is_finite());
        s.begin_window().unwrap();
        let buf = vec![1u8; 8 << 20];
        assert!(buf.iter().map(|&b| b as u64).sum::<u64>() > 0);
        assert!(s.peak_memory_mb().unwrap() >= 0.0);
        assert!(s.power_w().unwrap() >= 0.0);
    }
}
