//! Config-driven experiment runner for the private bandit library.

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

use anyhow::Result;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    Audit,
}

/// Executes a subcommand and returns `(summary line, success)`.
pub fn execute(cmd: Command, config: &Path, seed: Option<u64>, out: &Path) -> Result<(String, bool)> {
    let resolved = ExperimentConfig::load(config)?.resolve(seed)?;
    let mut line = String::new();
    if resolved.requested_horizon != resolved.config.horizon {
        line.push_str(&format!(
            "horizon {} rounded down to {}; ",
            resolved.requested_horizon, resolved.config.horizon
        ));
    }
    Ok(match cmd {
        Command::Run => {
            let o = commands::run_single(&resolved, out)?;
            line.push_str(&format!(
                "run T={} regret={:.6} comparator={:.6} -> {}",
                o.params.horizon,
                o.regret,
                o.comparator.value,
                out.display()
            ));
            (line, true)
        }
        Command::Sweep => {
            let fit = commands::run_sweep(&resolved, out)?;
            line.push_str(&format!(
                "sweep slope={:.4} +/- {:.4} over {} horizons -> {}",
                fit.slope,
                fit.half_width,
                fit.grid.len(),
                out.display()
            ));
            (line, true)
        }
        Command::Audit => {
            let report = commands::run_audit(&resolved, out)?;
            let failed: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            if failed.is_empty() {
                line.push_str(&format!("audit passed {} checks -> {}", report.checks.len(), out.display()));
            } else {
                line.push_str(&format!("audit FAILED: {} -> {}", failed.join(", "), out.display()));
            }
            (line, report.all_passed)
        }
    })
}
