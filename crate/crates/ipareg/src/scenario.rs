//! Scenario files: one TOML document per experiment.
//!
//! Parsing is strict (unknown keys are errors) and every nested value is
//! checked against the same constructors the core crate uses, so a loaded
//! [`Scenario`] always runs.

use std::fmt;
use std::path::Path;

use ipareg_core::control::{ControllerConfig, GainMode, SetpointSchedule};
use ipareg_core::newton::Interval;
use ipareg_core::ooo::WorkloadProfile;
use ipareg_core::petri::{PetriConfig, PetriEstimator};
use ipareg_core::queue::{Md1DelayConfig, Md1kLossConfig};
use serde::Deserialize;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: invalid `{field}`: {message}")]
    Validation {
        origin: String,
        field: String,
        message: String,
    },
    #[error("{origin}: {source}")]
    Io {
        origin: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown scenario `{0}` (not a file and not a bundled name)")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantSpec {
    Md1Delay(Md1DelayConfig),
    Md1kLoss(Md1kLossConfig),
    Petri(PetriConfig),
    OooCore {
        preset: String,
        profile: WorkloadProfile,
        instructions_per_cycle: usize,
    },
}

impl PlantSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PlantSpec::Md1Delay(_) => "md1_delay",
            PlantSpec::Md1kLoss(_) => "md1k_loss",
            PlantSpec::Petri(_) => "petri",
            PlantSpec::OooCore { .. } => "ooo_core",
        }
    }
}

/// A separately regulated copy of the plant with its own setpoints, such as
/// one core of a multi-core processor.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub label: String,
    pub schedule: SetpointSchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSpec {
    /// Convergence band half-width around the setpoint.
    pub band: f64,
    /// Interpret `band` as a fraction of the setpoint.
    pub band_relative: bool,
    /// 1-based inclusive ranges whose mean output is reported.
    pub segments: Vec<(usize, usize)>,
    /// Settling tolerance for gain comparisons as a fraction of the
    /// setpoint; the convergence band is used when absent.
    pub settle_relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub n_cycles: usize,
    pub seed: u64,
    pub replications: usize,
    /// Initial controls; each one is a separate run.
    pub u1: Vec<f64>,
    pub plant: PlantSpec,
    pub controller: ControllerConfig,
    pub lanes: Vec<Lane>,
    pub report: ReportSpec,
}

impl Scenario {
    /// Band half-width at setpoint `r`.
    pub fn band_at(&self, r: f64) -> f64 {
        if self.report.band_relative {
            self.report.band * r.abs()
        } else {
            self.report.band
        }
    }

    /// Settling tolerance at setpoint `r`.
    pub fn settle_band_at(&self, r: f64) -> f64 {
        match self.report.settle_relative {
            Some(f) => f * r.abs(),
            None => self.band_at(r),
        }
    }
}

// ---- raw file layout ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    name: String,
    #[serde(default)]
    description: String,
    n_cycles: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    replications: usize,
    u1: OneOrMany,
    plant: RawPlant,
    controller: RawController,
    #[serde(default)]
    schedule: Vec<RawSegment>,
    #[serde(default)]
    lane: Vec<RawLane>,
    report: RawReport,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawPlant {
    Md1Delay {
        lambda: f64,
        jobs_per_cycle: usize,
        #[serde(default = "yes")]
        reset_each_cycle: bool,
    },
    Md1kLoss {
        lambda: f64,
        buffer_k: usize,
        t_f: f64,
        #[serde(default = "yes")]
        carry_state: bool,
        #[serde(default)]
        sfm_exponent: Option<i32>,
    },
    Petri {
        v3: Option<f64>,
        v21: Option<f64>,
        v22: Option<f64>,
        order_period: Option<f64>,
        first_order_at: Option<f64>,
        order_lo: Option<f64>,
        order_hi: Option<f64>,
        t_f: Option<f64>,
        m1_0: Option<f64>,
        m2_0: Option<f64>,
        reset_each_cycle: Option<bool>,
        /// `"ipa"` or `{ crn = delta }`
        estimator: Option<RawEstimator>,
    },
    OooCore {
        preset: String,
        instructions_per_cycle: usize,
        mem_fraction: Option<f64>,
        cache_hit_prob: Option<f64>,
        dep_prob: Option<f64>,
        mem_latency_ns: Option<f64>,
        mshr_capacity: Option<usize>,
        rob_capacity: Option<usize>,
        phase_jitter: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawEstimator {
    Ipa,
    Crn(f64),
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawGain {
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    interval: [f64; 2],
    #[serde(default = "unit")]
    k_scale: f64,
    #[serde(default = "adaptive")]
    gain: RawGain,
    #[serde(default)]
    divisor_floor: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

fn adaptive() -> RawGain {
    RawGain::Adaptive
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    from: usize,
    r: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLane {
    label: String,
    #[serde(default)]
    r: Option<f64>,
    #[serde(default)]
    schedule: Vec<RawSegment>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    band: f64,
    #[serde(default)]
    band_relative: bool,
    #[serde(default)]
    segments: Vec<[usize; 2]>,
    settle_relative: Option<f64>,
}

// ---- validation ----

struct Checker<'a> {
    origin: &'a str,
}

impl Checker<'_> {
    fn fail(&self, field: &str, message: impl fmt::Display) -> ScenarioError {
        ScenarioError::Validation {
            origin: self.origin.to_string(),
            field: field.to_string(),
            message: message.to_string(),
        }
    }

    fn ensure(&self, ok: bool, field: &str, message: &str) -> Result<(), ScenarioError> {
        if ok {
            Ok(())
        } else {
            Err(self.fail(field, message))
        }
    }

    fn schedule(&self, field: &str, raw: &[RawSegment]) -> Result<SetpointSchedule, ScenarioError> {
        SetpointSchedule::new(raw.iter().map(|s| (s.from, s.r)).collect())
            .map_err(|e| self.fail(field, e))
    }
}

/// Parse and validate scenario text. `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((0, 0));
        ScenarioError::Parse {
            origin: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let c = Checker { origin };

    c.ensure(
        raw.schema_version == SCHEMA_VERSION,
        "schema_version",
        "unsupported schema version (expected 1)",
    )?;
    c.ensure(!raw.name.trim().is_empty(), "name", "must not be empty")?;
    c.ensure(raw.n_cycles >= 1, "n_cycles", "must be >= 1")?;
    c.ensure(raw.replications >= 1, "replications", "must be >= 1")?;
    let u1 = match raw.u1 {
        OneOrMany::One(u) => vec![u],
        OneOrMany::Many(v) => v,
    };
    c.ensure(!u1.is_empty(), "u1", "needs at least one value")?;

    let interval = Interval::new(raw.controller.interval[0], raw.controller.interval[1])
        .map_err(|e| c.fail("controller.interval", e))?;
    for &u in &u1 {
        c.ensure(interval.contains(u), "u1", "every start must lie in controller.interval")?;
    }
    let gain_mode = match raw.controller.gain {
        RawGain::Adaptive => GainMode::Adaptive,
        RawGain::Fixed(a) => GainMode::Fixed(a),
    };
    let base = ControllerConfig::adaptive(interval);
    let controller = ControllerConfig::new(
        raw.controller.k_scale,
        interval,
        gain_mode,
        raw.controller.divisor_floor.unwrap_or(base.divisor_floor()),
    )
    .map_err(|e| c.fail("controller", e))?;

    let plant = plant_spec(&c, raw.plant)?;

    let lanes = if raw.lane.is_empty() {
        c.ensure(!raw.schedule.is_empty(), "schedule", "need a schedule or at least one lane")?;
        vec![Lane {
            label: String::new(),
            schedule: c.schedule("schedule", &raw.schedule)?,
        }]
    } else {
        c.ensure(raw.schedule.is_empty(), "schedule", "use per-lane setpoints when lanes are given")?;
        let mut lanes = Vec::with_capacity(raw.lane.len());
        for (i, l) in raw.lane.iter().enumerate() {
            let field = format!("lane[{i}]");
            c.ensure(!l.label.trim().is_empty(), &field, "label must not be empty")?;
            c.ensure(
                !lanes.iter().any(|x: &Lane| x.label == l.label),
                &field,
                "labels must be unique",
            )?;
            let schedule = match (l.r, l.schedule.is_empty()) {
                (Some(r), true) => c.schedule(&field, &[RawSegment { from: 1, r }])?,
                (None, false) => c.schedule(&field, &l.schedule)?,
                _ => return Err(c.fail(&field, "give exactly one of `r` or `schedule`")),
            };
            lanes.push(Lane {
                label: l.label.clone(),
                schedule,
            });
        }
        lanes
    };

    c.ensure(
        raw.report.band > 0.0 && raw.report.band.is_finite(),
        "report.band",
        "must be positive",
    )?;
    if let Some(f) = raw.report.settle_relative {
        c.ensure(f > 0.0 && f.is_finite(), "report.settle_relative", "must be positive")?;
    }
    for (i, s) in raw.report.segments.iter().enumerate() {
        c.ensure(
            1 <= s[0] && s[0] <= s[1] && s[1] <= raw.n_cycles,
            &format!("report.segments[{i}]"),
            "need 1 <= from <= to <= n_cycles",
        )?;
    }

    Ok(Scenario {
        name: raw.name,
        description: raw.description,
        n_cycles: raw.n_cycles,
        seed: raw.seed,
        replications: raw.replications,
        u1,
        plant,
        controller,
        lanes,
        report: ReportSpec {
            band: raw.report.band,
            band_relative: raw.report.band_relative,
            segments: raw.report.segments.iter().map(|s| (s[0], s[1])).collect(),
            settle_relative: raw.report.settle_relative,
        },
    })
}

fn plant_spec(c: &Checker<'_>, raw: RawPlant) -> Result<PlantSpec, ScenarioError> {
    let spec = match raw {
        RawPlant::Md1Delay {
            lambda,
            jobs_per_cycle,
            reset_each_cycle,
        } => {
            let cfg = Md1DelayConfig {
                lambda,
                jobs_per_cycle,
                reset_each_cycle,
            };
            cfg.validate().map_err(|e| c.fail("plant", e))?;
            PlantSpec::Md1Delay(cfg)
        }
        RawPlant::Md1kLoss {
            lambda,
            buffer_k,
            t_f,
            carry_state,
            sfm_exponent,
        } => {
            let mut cfg = Md1kLossConfig::new(lambda, buffer_k, t_f);
            cfg.carry_state = carry_state;
            if let Some(e) = sfm_exponent {
                cfg.sfm_exponent = e;
            }
            cfg.validate().map_err(|e| c.fail("plant", e))?;
            PlantSpec::Md1kLoss(cfg)
        }
        RawPlant::Petri {
            v3,
            v21,
            v22,
            order_period,
            first_order_at,
            order_lo,
            order_hi,
            t_f,
            m1_0,
            m2_0,
            reset_each_cycle,
            estimator,
        } => {
            let d = PetriConfig::default();
            let cfg = PetriConfig {
                v3: v3.unwrap_or(d.v3),
                v21: v21.unwrap_or(d.v21),
                v22: v22.unwrap_or(d.v22),
                order_period: order_period.unwrap_or(d.order_period),
                first_order_at: first_order_at.unwrap_or(d.first_order_at),
                order_lo: order_lo.unwrap_or(d.order_lo),
                order_hi: order_hi.unwrap_or(d.order_hi),
                t_f: t_f.unwrap_or(d.t_f),
                m1_0: m1_0.unwrap_or(d.m1_0),
                m2_0: m2_0.unwrap_or(d.m2_0),
                reset_each_cycle: reset_each_cycle.unwrap_or(d.reset_each_cycle),
                estimator: match estimator {
                    None | Some(RawEstimator::Ipa) => PetriEstimator::Ipa,
                    Some(RawEstimator::Crn(delta)) => PetriEstimator::Crn { delta },
                },
            };
            cfg.validate().map_err(|e| c.fail("plant", e))?;
            PlantSpec::Petri(cfg)
        }
        RawPlant::OooCore {
            preset,
            instructions_per_cycle,
            mem_fraction,
            cache_hit_prob,
            dep_prob,
            mem_latency_ns,
            mshr_capacity,
            rob_capacity,
            phase_jitter,
        } => {
            let base = WorkloadProfile::preset(&preset)
                .ok_or_else(|| c.fail("plant.preset", "expected \"compute\" or \"memory\""))?;
            let profile = WorkloadProfile {
                mem_fraction: mem_fraction.unwrap_or(base.mem_fraction),
                cache_hit_prob: cache_hit_prob.unwrap_or(base.cache_hit_prob),
                dep_prob: dep_prob.unwrap_or(base.dep_prob),
                mem_latency_ns: mem_latency_ns.unwrap_or(base.mem_latency_ns),
                mshr_capacity: mshr_capacity.unwrap_or(base.mshr_capacity),
                rob_capacity: rob_capacity.unwrap_or(base.rob_capacity),
                phase_jitter: phase_jitter.unwrap_or(base.phase_jitter),
                ..base
            };
            profile.validate().map_err(|e| c.fail("plant", e))?;
            c.ensure(
                instructions_per_cycle >= 1,
                "plant.instructions_per_cycle",
                "must be >= 1",
            )?;
            PlantSpec::OooCore {
                preset,
                profile,
                instructions_per_cycle,
            }
        }
    };
    Ok(spec)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        origin: origin.clone(),
        source,
    })?;
    parse_scenario(&text, &origin)
}

/// Scenarios shipped with the binary, as `(name, file text)`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("md1_delay_fig2", include_str!("../scenarios/md1_delay_fig2.toml")),
    ("md1_delay_fig5", include_str!("../scenarios/md1_delay_fig5.toml")),
    ("md1k_loss_fig8", include_str!("../scenarios/md1k_loss_fig8.toml")),
    ("md1k_loss_fig9", include_str!("../scenarios/md1k_loss_fig9.toml")),
    ("petri_fig11", include_str!("../scenarios/petri_fig11.toml")),
    ("petri_extreme", include_str!("../scenarios/petri_extreme.toml")),
    ("ooo_compute", include_str!("../scenarios/ooo_compute.toml")),
    ("ooo_memory", include_str!("../scenarios/ooo_memory.toml")),
    ("ooo_compute_k02", include_str!("../scenarios/ooo_compute_k02.toml")),
    ("ooo_memory_k02", include_str!("../scenarios/ooo_memory_k02.toml")),
];

pub fn bundled(name: &str) -> Result<Scenario, ScenarioError> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
    parse_scenario(text, &format!("<bundled {name}>"))
}

/// A path if one exists, otherwise a bundled name.
pub fn resolve(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(name_or_path);
    if path.exists() {
        load_scenario(path)
    } else if BUNDLED.iter().any(|(n, _)| *n == name_or_path) {
        bundled(name_or_path)
    } else {
        Err(ScenarioError::Unknown(name_or_path.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "t"
n_cycles = 10
u1 = 0.5

[plant]
kind = "md1_delay"
lambda = 0.9
jobs_per_cycle = 100

[controller]
interval = [0.05, 1.1]

[[schedule]]
from = 1
r = 3.0

[report]
band = 0.5
"#;

    #[test]
    fn minimal_file_parses_with_defaults() {
        let s = parse_scenario(MINIMAL, "t").unwrap();
        assert_eq!(s.replications, 1);
        assert_eq!(s.seed, 0);
        assert_eq!(s.u1, vec![0.5]);
        assert_eq!(s.controller.k_scale(), 1.0);
        assert_eq!(s.controller.gain_mode(), GainMode::Adaptive);
        assert_eq!(s.lanes.len(), 1);
        assert!(matches!(s.plant, PlantSpec::Md1Delay(c) if c.reset_each_cycle));
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_position() {
        let text = MINIMAL.replace("jobs_per_cycle = 100", "jobs_per_cycle = 100\nrate = 2");
        match parse_scenario(&text, "t") {
            Err(ScenarioError::Parse { line, message, .. }) => {
                assert!(line > 0);
                assert!(message.contains("rate"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_names_the_field() {
        let text = MINIMAL.replace("u1 = 0.5", "u1 = 5.0");
        match parse_scenario(&text, "t") {
            Err(ScenarioError::Validation { field, .. }) => assert_eq!(field, "u1"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("interval = [0.05, 1.1]", "interval = [0.05, 1.1]\nk_scale = 2.0");
        match parse_scenario(&text, "t") {
            Err(ScenarioError::Validation { field, .. }) => assert_eq!(field, "controller"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(
            parse_scenario(&text, "t"),
            Err(ScenarioError::Validation { field, .. }) if field == "schema_version"
        ));
    }

    #[test]
    fn fixed_gain_and_lanes() {
        let text = MINIMAL
            .replace("interval = [0.05, 1.1]", "interval = [0.05, 1.1]\ngain = { fixed = 0.03 }")
            .replace(
                "[[schedule]]\nfrom = 1\nr = 3.0\n",
                "[[lane]]\nlabel = \"a\"\nr = 1.0\n\n[[lane]]\nlabel = \"b\"\nschedule = [{ from = 1, r = 2.0 }, { from = 5, r = 1.0 }]\n",
            );
        let s = parse_scenario(&text, "t").unwrap();
        assert_eq!(s.controller.gain_mode(), GainMode::Fixed(0.03));
        assert_eq!(s.lanes.len(), 2);
        assert_eq!(s.lanes[1].schedule.at(6), 1.0);
    }

    #[test]
    fn every_bundled_scenario_validates() {
        for (name, _) in BUNDLED {
            let s = bundled(name).unwrap();
            assert_eq!(&s.name, name);
        }
        assert!(matches!(bundled("nope"), Err(ScenarioError::Unknown(_))));
    }

    #[test]
    fn bundled_values() {
        let s = bundled("md1_delay_fig2").unwrap();
        assert_eq!(s.u1, vec![1.1]);
        assert_eq!(s.n_cycles, 100);
        assert_eq!(s.lanes[0].schedule.at(1), 3.0);
        match s.plant {
            PlantSpec::Md1Delay(c) => {
                assert_eq!(c.lambda, 0.9);
                assert_eq!(c.jobs_per_cycle, 10_000);
            }
            other => panic!("{other:?}"),
        }
        let s = bundled("petri_fig11").unwrap();
        assert_eq!(s.u1, vec![35.0, 15.0]);
        assert_eq!(s.lanes[0].schedule.at(1), 758.70);
        assert!(matches!(s.plant, PlantSpec::Petri(c) if c.t_f == 1000.0));
    }
}
