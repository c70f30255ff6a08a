//! Batch front door: experiment configuration, the run / replay / validate
//! commands, and the CSV metric tables they write.
//!
//! Output files (all schema-stable, one header row each):
//! - `ospa.csv`: `variant,grid_param,grid_value,avg_ospa_m` — the
//!   time-and-run averaged feature OSPA, one row per grid point and
//!   variant (plot-ready for the noise-sweep figures).
//! - `vehicle_error.csv`: `variant,grid_value,run_id,t,vehicle_id,
//!   pos_error_m` — per-step vehicle position errors for every variant and
//!   baseline.
//! - `cdf.csv`: `variant,grid_value,vehicle_id,quantile,error_m` — the
//!   empirical error CDF sampled at percentiles 1..=100.
//! - `manifest.json`: config hash, seed list and software version.

use pmb_slat::error::SlatError;
use pmb_slat::filter::{FilterConfig, Variant};
use pmb_slat::metrics::EmpiricalCdf;
use pmb_slat::sim::{
    average_ospa, generate_world, run_filter, run_monte_carlo, BaselineFlags, NamedFilterConfig,
    RunMetrics, ScenarioSpec, SimWorld,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Process exit codes: 0 success, 2 invalid configuration or input file,
/// 3 runtime numerical failure.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or unreadable input; maps to exit code 2.
    Config(String),
    /// Numerical or IO failure during a run; maps to exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

/// Parameter swept across a grid of values; the value is applied to the
/// scenario before each batch (GNSS variance applies to every vehicle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    GnssSigma2,
    V2fSigma2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Top-level experiment description, loaded from a JSON config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub variants: Vec<NamedFilterConfig>,
    #[serde(default)]
    pub baselines: BaselineFlags,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    /// Explicit seed list; wins over `base_seed` when present.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// First seed of the derived list base_seed..base_seed+n_runs-1.
    #[serde(default)]
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Write one world_<seed>.json per run for later replay.
    #[serde(default)]
    pub dump_worlds: bool,
}

fn default_n_runs() -> usize {
    1
}

impl ExperimentConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        if let Some(seeds) = &self.seeds {
            return seeds.clone();
        }
        let base = self.base_seed.unwrap_or(1);
        (0..self.n_runs as u64).map(|i| base + i).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario
            .validate()
            .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        if self.variants.is_empty() && !self.baselines.local_kf && !self.baselines.genie_kf {
            return Err(CliError::Config(
                "at least one variant or baseline must be enabled".into(),
            ));
        }
        let mut labels = BTreeSet::new();
        for v in &self.variants {
            if !labels.insert(v.label.clone()) {
                return Err(CliError::Config(format!(
                    "duplicate variant label {:?}",
                    v.label
                )));
            }
            if v.label == "local_kf" || v.label == "genie_kf" {
                return Err(CliError::Config(format!(
                    "variant label {:?} is reserved for baselines",
                    v.label
                )));
            }
            v.config
                .validate()
                .map_err(|e| CliError::Config(format!("variant {:?}: {e}", v.label)))?;
        }
        if self.seed_list().is_empty() {
            return Err(CliError::Config("empty seed list".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(CliError::Config("sweep.values must not be empty".into()));
            }
            if sweep.values.iter().any(|v| *v <= 0.0) {
                return Err(CliError::Config(
                    "sweep.values must be positive variances".into(),
                ));
            }
        }
        Ok(())
    }

    /// The semantically meaningful part of the config: everything that
    /// changes the computed numbers. Output and logging toggles stay out.
    fn semantic_view(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario": self.scenario,
            "variants": self.variants,
            "baselines": self.baselines,
            "seeds": self.seed_list(),
            "sweep": self.sweep,
        })
    }

    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_vec(&self.semantic_view()).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        hex::encode(hasher.finalize())
    }
}

/// Parse a config file, anchoring parse errors to line and column.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "{}:{}:{}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    Ok(config)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

/// Effort cap from the environment; bounds --jobs when set.
pub fn effective_jobs(requested: usize) -> usize {
    match std::env::var("PMB_SLAT_JOBS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(cap) if cap > 0 => {
            if requested == 0 {
                cap
            } else {
                requested.min(cap)
            }
        }
        _ => requested,
    }
}

fn scenario_for_grid(base: &ScenarioSpec, sweep: Option<&SweepSpec>, value: f64) -> ScenarioSpec {
    let mut scenario = base.clone();
    if let Some(sweep) = sweep {
        match sweep.parameter {
            SweepParameter::GnssSigma2 => {
                for v in &mut scenario.vehicles {
                    v.gnss_sigma2 = value;
                }
            }
            SweepParameter::V2fSigma2 => scenario.v2f_sigma2 = value,
        }
    }
    scenario
}

fn grid_label(sweep: Option<&SweepSpec>) -> &'static str {
    match sweep.map(|s| s.parameter) {
        Some(SweepParameter::GnssSigma2) => "gnss_sigma2",
        Some(SweepParameter::V2fSigma2) => "v2f_sigma2",
        None => "none",
    }
}

/// Run the configured experiment and write the metric tables.
pub fn cmd_run(config_path: &Path, out_dir: &Path, jobs: usize) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    config.validate()?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", out_dir.display())))?;
    let seeds = config.seed_list();
    let jobs = effective_jobs(jobs);

    let grid_values: Vec<f64> = match &config.sweep {
        Some(sweep) => sweep.values.clone(),
        None => vec![0.0],
    };
    let grid_param = grid_label(config.sweep.as_ref());

    let mut ospa_csv = String::from("variant,grid_param,grid_value,avg_ospa_m\n");
    let mut vehicle_csv = String::from("variant,grid_value,run_id,t,vehicle_id,pos_error_m\n");
    let mut cdf_csv = String::from("variant,grid_value,vehicle_id,quantile,error_m\n");

    for &grid_value in &grid_values {
        let scenario = scenario_for_grid(&config.scenario, config.sweep.as_ref(), grid_value);
        let metrics = run_monte_carlo(
            &scenario,
            &config.variants,
            &config.baselines,
            &seeds,
            jobs,
        )
        .map_err(|e| runtime_error(&seeds, e))?;

        let mut labels: Vec<String> = config.variants.iter().map(|v| v.label.clone()).collect();
        if config.baselines.local_kf {
            labels.push("local_kf".into());
        }
        if config.baselines.genie_kf {
            labels.push("genie_kf".into());
        }

        for label in &labels {
            let has_ospa = metrics
                .iter()
                .any(|m| m.label == *label && !m.ospa.is_empty());
            if has_ospa {
                let avg = average_ospa(&metrics, label);
                writeln!(ospa_csv, "{label},{grid_param},{grid_value},{avg}").unwrap();
            }
            write_vehicle_rows(&mut vehicle_csv, &metrics, label, grid_value);
            write_cdf_rows(&mut cdf_csv, &scenario, &metrics, label, grid_value);
        }

        if config.dump_worlds {
            for &seed in &seeds {
                let world =
                    generate_world(&scenario, seed).map_err(|e| runtime_error(&[seed], e))?;
                let name = if grid_values.len() > 1 {
                    format!("world_{grid_value}_{seed}.json")
                } else {
                    format!("world_{seed}.json")
                };
                write_file(&out_dir.join(name), &serde_json::to_string(&world).unwrap())?;
            }
        }
    }

    write_file(&out_dir.join("ospa.csv"), &ospa_csv)?;
    write_file(&out_dir.join("vehicle_error.csv"), &vehicle_csv)?;
    write_file(&out_dir.join("cdf.csv"), &cdf_csv)?;
    let manifest = Manifest {
        config_hash: config.config_hash(),
        seeds,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_file(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).unwrap(),
    )?;
    Ok(())
}

fn runtime_error(seeds: &[u64], e: SlatError) -> CliError {
    CliError::Runtime(format!("run failed (seeds {seeds:?}): {e}"))
}

fn write_vehicle_rows(out: &mut String, metrics: &[RunMetrics], label: &str, grid_value: f64) {
    for m in metrics.iter().filter(|m| m.label == label) {
        for row in &m.vehicle_errors {
            writeln!(
                out,
                "{label},{grid_value},{},{},{},{}",
                m.run_id, row.t, row.vehicle_id, row.pos_error_m
            )
            .unwrap();
        }
    }
}

fn write_cdf_rows(
    out: &mut String,
    scenario: &ScenarioSpec,
    metrics: &[RunMetrics],
    label: &str,
    grid_value: f64,
) {
    for vehicle in &scenario.vehicles {
        let errors = pmb_slat::sim::pooled_vehicle_errors(metrics, label, vehicle.id);
        if errors.is_empty() {
            continue;
        }
        let cdf = EmpiricalCdf::new(errors).expect("non-empty");
        for pct in 1..=100u32 {
            let q = pct as f64 / 100.0;
            writeln!(
                out,
                "{label},{grid_value},{},{q},{}",
                vehicle.id,
                cdf.quantile(q)
            )
            .unwrap();
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Look up the filter configuration for a named replay variant.
pub fn variant_by_name(name: &str) -> Option<FilterConfig> {
    let mut cfg = FilterConfig::default();
    match name {
        "proposed" => {}
        "proposed_update" => cfg.sensor_update_enabled = true,
        "tombp1" => cfg.variant = Variant::Tombp1,
        "tombp2" => cfg.variant = Variant::Tombp2,
        _ => return None,
    }
    Some(cfg)
}

/// Re-run one filter over a recorded world, writing per-step state
/// snapshots and the same metric tables as `run`.
pub fn cmd_replay(scans_path: &Path, variant: &str, out_dir: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(scans_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", scans_path.display())))?;
    let world: SimWorld = serde_json::from_str(&text).map_err(|e| {
        let offset = byte_offset(&text, e.line(), e.column());
        CliError::Config(format!(
            "{}: byte offset {offset} (line {}, column {}): {e}",
            scans_path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let cfg = variant_by_name(variant)
        .ok_or_else(|| CliError::Config(format!("unknown variant {variant:?}")))?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", out_dir.display())))?;

    let mut snapshots = Vec::new();
    let metrics = run_filter(&world, &cfg, variant, Some(&mut snapshots))
        .map_err(|e| runtime_error(&[world.run_id], e))?;

    let mut snapshot_text = String::new();
    for state in &snapshots {
        snapshot_text.push_str(&state.to_json());
        snapshot_text.push('\n');
    }
    write_file(&out_dir.join("snapshots.jsonl"), &snapshot_text)?;

    let mut ospa_csv = String::from("variant,grid_param,grid_value,avg_ospa_m\n");
    let all = vec![metrics];
    writeln!(ospa_csv, "{variant},none,0,{}", average_ospa(&all, variant)).unwrap();
    let mut vehicle_csv = String::from("variant,grid_value,run_id,t,vehicle_id,pos_error_m\n");
    write_vehicle_rows(&mut vehicle_csv, &all, variant, 0.0);
    write_file(&out_dir.join("ospa.csv"), &ospa_csv)?;
    write_file(&out_dir.join("vehicle_error.csv"), &vehicle_csv)?;
    Ok(())
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (idx, l) in text.lines().enumerate() {
        if idx + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    text.len()
}

/// Schema and invariant validation only; no simulation.
pub fn cmd_validate(config_path: &Path) -> Result<String, CliError> {
    let config = load_config(config_path)?;
    config.validate()?;
    let seeds = config.seed_list();
    let mut report = String::new();
    writeln!(report, "config ok: {}", config_path.display()).unwrap();
    writeln!(report, "config_hash: {}", config.config_hash()).unwrap();
    writeln!(
        report,
        "seeds ({}{}): {:?}",
        seeds.len(),
        if config.seeds.is_none() {
            ", derived from base seed"
        } else {
            ""
        },
        seeds
    )
    .unwrap();
    Ok(report)
}

pub fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
