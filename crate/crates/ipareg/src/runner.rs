//! Executing scenarios and summarizing the traces.

use std::fmt;

use ipareg_core::control::{run_regulation, ControlError, GainMode, RunTrace};
use ipareg_core::ooo::OooCorePlant;
use ipareg_core::petri::PetriPlant;
use ipareg_core::plant::Plant;
use ipareg_core::queue::{Md1DelayPlant, Md1kLossPlant};
use ipareg_core::sim::{mean_over, RngStream};
use rayon::prelude::*;
use thiserror::Error;

use crate::scenario::{Lane, PlantSpec, Scenario};

/// Stream ids used by the plants; lanes add multiples of `LANE_STRIDE`.
const STREAM_DELAY: u64 = 1;
const STREAM_LOSS: u64 = 2;
const STREAM_PETRI: u64 = 3;
const STREAM_CORE: u64 = 4;
const LANE_STRIDE: u64 = 16;

#[derive(Debug, Error)]
#[error("scenario `{scenario}` ({run}): {source}")]
pub struct RunError {
    pub scenario: String,
    pub run: RunId,
    #[source]
    pub source: ControlError,
}

/// Which run of a scenario a trace belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct RunId {
    pub lane: String,
    pub u1: f64,
    pub replication: usize,
    pub seed: u64,
}

impl fmt::Display for RunId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.lane.is_empty() {
            write!(f, "lane {}, ", self.lane)?;
        }
        write!(f, "u1 {}, replication {}, seed {}", self.u1, self.replication, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMean {
    pub from: usize,
    pub to: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub id: RunId,
    pub trace: RunTrace,
    pub segment_means: Vec<SegmentMean>,
    /// First cycle with `|y - r|` inside the band.
    pub convergence_cycle: Option<usize>,
    /// Band half-width at the first setpoint.
    pub band: f64,
}

impl RunReport {
    /// Output file stem, unique within a scenario.
    pub fn file_stem(&self, multi_start: bool) -> String {
        let mut stem = self.scenario.clone();
        if !self.id.lane.is_empty() {
            stem.push('_');
            stem.push_str(&self.id.lane);
        }
        if multi_start {
            stem.push_str(&format!("_u1-{}", self.id.u1));
        }
        stem.push_str(&format!("_rep{}", self.id.replication));
        stem
    }
}

pub fn build_plant(spec: &PlantSpec, seed: u64, lane: usize) -> Box<dyn Plant + Send> {
    let offset = LANE_STRIDE * lane as u64;
    // configs were validated when the scenario was loaded
    match spec {
        PlantSpec::Md1Delay(cfg) => Box::new(
            Md1DelayPlant::with_stream(*cfg, RngStream::new(seed, STREAM_DELAY + offset))
                .expect("validated config"),
        ),
        PlantSpec::Md1kLoss(cfg) => Box::new(
            Md1kLossPlant::with_stream(*cfg, RngStream::new(seed, STREAM_LOSS + offset))
                .expect("validated config"),
        ),
        PlantSpec::Petri(cfg) => Box::new(
            PetriPlant::with_stream(*cfg, RngStream::new(seed, STREAM_PETRI + offset))
                .expect("validated config"),
        ),
        PlantSpec::OooCore {
            profile,
            instructions_per_cycle,
            ..
        } => Box::new(
            OooCorePlant::with_stream(
                *profile,
                *instructions_per_cycle,
                RngStream::new(seed, STREAM_CORE + offset),
            )
            .expect("validated config"),
        ),
    }
}

struct Job<'a> {
    lane_index: usize,
    lane: &'a Lane,
    u1: f64,
    replication: usize,
    seed: u64,
}

fn jobs(scenario: &Scenario) -> Vec<Job<'_>> {
    let mut out = Vec::new();
    for replication in 0..scenario.replications {
        for (lane_index, lane) in scenario.lanes.iter().enumerate() {
            for &u1 in &scenario.u1 {
                out.push(Job {
                    lane_index,
                    lane,
                    u1,
                    replication,
                    seed: scenario.seed.wrapping_add(replication as u64),
                });
            }
        }
    }
    out
}

/// First cycle whose output lies strictly inside the band around its setpoint.
pub fn convergence_cycle(scenario: &Scenario, trace: &RunTrace) -> Option<usize> {
    trace
        .rows
        .iter()
        .find(|row| (row.y - row.r).abs() < scenario.band_at(row.r))
        .map(|row| row.n)
}

fn summarize(scenario: &Scenario, id: RunId, trace: RunTrace) -> RunReport {
    let ys = trace.ys();
    let segment_means = scenario
        .report
        .segments
        .iter()
        .filter_map(|&(from, to)| {
            let to = to.min(ys.len());
            let mean = mean_over(&ys, from, to).ok()?;
            Some(SegmentMean { from, to, mean })
        })
        .collect();
    let band = scenario.band_at(trace.rows.first().map_or(0.0, |r| r.r));
    RunReport {
        scenario: scenario.name.clone(),
        convergence_cycle: convergence_cycle(scenario, &trace),
        id,
        trace,
        segment_means,
        band,
    }
}

/// Run every (replication, lane, start) combination. Replication `i` uses
/// seed `seed + i`; lanes use disjoint random streams; different starts of
/// the same lane and replication see the same randomness.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<RunReport>, RunError> {
    jobs(scenario)
        .par_iter()
        .map(|job| {
            let id = RunId {
                lane: job.lane.label.clone(),
                u1: job.u1,
                replication: job.replication,
                seed: job.seed,
            };
            let mut plant = build_plant(&scenario.plant, job.seed, job.lane_index);
            match run_regulation(
                plant.as_mut(),
                &job.lane.schedule,
                &scenario.controller,
                job.u1,
                scenario.n_cycles,
            ) {
                Ok(trace) => Ok(summarize(scenario, id, trace)),
                Err(source) => Err(RunError {
                    scenario: scenario.name.clone(),
                    run: id,
                    source,
                }),
            }
        })
        .collect()
}

/// Outcome of one controller on one setpoint segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutcome {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    /// Cycles from the segment start until the output first enters the
    /// settling band, counting the entry cycle.
    pub settle_cycles: Option<usize>,
    /// Largest `|y - r|` from the settling cycle to the segment end, or over
    /// the whole segment when the output never settles.
    pub amplitude: f64,
    pub mean: f64,
    /// Mean applied gain over the segment.
    pub mean_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutcome {
    pub label: String,
    pub gain_mode: GainMode,
    pub segments: Vec<SegmentOutcome>,
    pub trace: RunTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainComparison {
    pub scenario: String,
    pub controllers: Vec<ControllerOutcome>,
}

pub fn segment_outcomes(scenario: &Scenario, lane: &Lane, trace: &RunTrace) -> Vec<SegmentOutcome> {
    lane.schedule
        .ranges(trace.rows.len())
        .into_iter()
        .map(|(from, to, r)| {
            let rows = &trace.rows[from - 1..to];
            let band = scenario.settle_band_at(r);
            let settle = rows.iter().position(|row| (row.y - r).abs() < band);
            let tail = &rows[settle.unwrap_or(0)..];
            let amplitude = tail.iter().map(|row| (row.y - r).abs()).fold(0.0, f64::max);
            let mean = rows.iter().map(|row| row.y).sum::<f64>() / rows.len() as f64;
            let gains: Vec<f64> = rows.iter().filter_map(|row| row.a).collect();
            SegmentOutcome {
                from,
                to,
                r,
                settle_cycles: settle.map(|p| p + 1),
                amplitude,
                mean,
                mean_gain: (!gains.is_empty()).then(|| gains.iter().sum::<f64>() / gains.len() as f64),
            }
        })
        .collect()
}

/// Run the first lane from the first start with the adaptive gain and with
/// each fixed gain, all on the same random numbers.
pub fn compare_fixed_gain(scenario: &Scenario, gains: &[f64]) -> Result<GainComparison, RunError> {
    let lane = &scenario.lanes[0];
    let u1 = scenario.u1[0];
    let id = RunId {
        lane: lane.label.clone(),
        u1,
        replication: 0,
        seed: scenario.seed,
    };
    let fail = |source| RunError {
        scenario: scenario.name.clone(),
        run: id.clone(),
        source,
    };
    let mut modes = vec![GainMode::Adaptive];
    modes.extend(gains.iter().map(|&a| GainMode::Fixed(a)));
    let controllers = modes
        .par_iter()
        .map(|&mode| {
            let cfg = scenario.controller.with_gain_mode(mode).map_err(fail)?;
            let mut plant = build_plant(&scenario.plant, scenario.seed, 0);
            let trace = run_regulation(plant.as_mut(), &lane.schedule, &cfg, u1, scenario.n_cycles)
                .map_err(fail)?;
            Ok(ControllerOutcome {
                label: match mode {
                    GainMode::Adaptive => "adaptive".to_string(),
                    GainMode::Fixed(a) => format!("fixed {a}"),
                },
                gain_mode: mode,
                segments: segment_outcomes(scenario, lane, &trace),
                trace,
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    Ok(GainComparison {
        scenario: scenario.name.clone(),
        controllers,
    })
}
