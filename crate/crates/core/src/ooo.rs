//! Out-of-order core throughput plant.
//!
//! Times are in nanoseconds, so the clock period `tau` is in ns, the clock
//! rate `u = 1 / tau` in GHz and the throughput in instructions per ns
//! (GIPS). A control cycle commits `M` instructions of a synthetic trace.
//!
//! The timing pass resolves issue, execution start (`alpha`), completion
//! (`beta`) and commit (`d`) times together with the branch of every `max`
//! that fired. The derivative pass replays those branches, so values and
//! derivatives always describe the same event order. Memory latency is not
//! clocked by the core and contributes nothing to the derivatives.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::plant::{Plant, PlantCycleResult, PlantError};
use crate::sim::RngStream;

/// Values closer than this, relative to their magnitude, count as a tie.
/// Many ties hold for every `tau` (both sides are the same multiple of the
/// clock), so they must not flip with rounding noise.
const TIE_TOL: f64 = 1e-9;

/// `a` is strictly later than `b`.
fn later(a: f64, b: f64) -> bool {
    a - b > TIE_TOL * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstructionRecord {
    /// Position in the trace, starting at 1.
    pub index: usize,
    /// Issue time in clock cycles, relative to the first instruction.
    pub xi: u64,
    pub is_memory: bool,
    /// Execution cycles of a non-memory instruction.
    pub mu: u32,
    /// Load/store queue and cache cycles of a memory instruction.
    pub nu: u32,
    /// MSHR processing cycles of a cache miss.
    pub m_cycles: u32,
    /// DRAM access time of a cache miss, ns.
    pub mem_latency: f64,
    /// Zero-based position of the last instruction providing an operand.
    pub dep: Option<usize>,
    pub cache_hit: bool,
}

impl InstructionRecord {
    pub fn compute(index: usize, xi: u64, mu: u32, dep: Option<usize>) -> Self {
        Self {
            index,
            xi,
            is_memory: false,
            mu,
            nu: 0,
            m_cycles: 0,
            mem_latency: 0.0,
            dep,
            cache_hit: false,
        }
    }

    pub fn load_hit(index: usize, xi: u64, nu: u32) -> Self {
        Self {
            index,
            xi,
            is_memory: true,
            mu: 0,
            nu,
            m_cycles: 0,
            mem_latency: 0.0,
            dep: None,
            cache_hit: true,
        }
    }

    pub fn load_miss(index: usize, xi: u64, nu: u32, m_cycles: u32, mem_latency: f64) -> Self {
        Self {
            index,
            xi,
            is_memory: true,
            mu: 0,
            nu,
            m_cycles,
            mem_latency,
            dep: None,
            cache_hit: false,
        }
    }

    pub fn is_miss(&self) -> bool {
        self.is_memory && !self.cache_hit
    }
}

/// Which term set the execution start time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaBranch {
    Issue,
    /// Waited for the completion of instruction `k` (zero-based).
    DataDep(usize),
    /// Waited for MSHR head `l` (zero-based) to clear.
    MshrFull(usize),
}

/// Which term set the completion time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaBranch {
    Own,
    /// Cache miss that finished behind MSHR predecessor `j` (zero-based).
    MshrPredecessor(usize),
}

/// Which term set the commit time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitBranch {
    AfterExecution,
    RobOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StallFlags {
    pub alpha: AlphaBranch,
    pub beta: BetaBranch,
    pub commit: CommitBranch,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimingResult {
    pub tau: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub commit: Vec<f64>,
    pub alpha_d: Vec<f64>,
    pub beta_d: Vec<f64>,
    pub commit_d: Vec<f64>,
    pub stall_flags: Vec<StallFlags>,
}

impl TimingResult {
    /// Commit time of the last instruction.
    pub fn d_m(&self) -> f64 {
        self.commit.last().copied().unwrap_or(0.0)
    }

    pub fn d_m_prime(&self) -> f64 {
        self.commit_d.last().copied().unwrap_or(0.0)
    }
}

/// Finite miss buffer, in program order.
#[derive(Debug, Clone, Default)]
pub struct MshrState {
    capacity: usize,
    /// `(instruction, completion time)`
    entries: VecDeque<(usize, f64)>,
}

impl MshrState {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: VecDeque::new(),
        }
    }

    pub fn occupancy(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Drop entries that have completed by `t`, ties included.
    pub fn retire_until(&mut self, t: f64) {
        while self.entries.front().is_some_and(|e| !later(e.1, t)) {
            self.entries.pop_front();
        }
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    /// Head entry, removed because a stalled request waits for it to clear.
    pub fn pop_head(&mut self) -> Option<(usize, f64)> {
        self.entries.pop_front()
    }

    pub fn last(&self) -> Option<(usize, f64)> {
        self.entries.back().copied()
    }

    pub fn push(&mut self, index: usize, beta: f64) {
        self.entries.push_back((index, beta));
    }
}

/// Incremental evaluation of the timing recursions, one instruction at a time.
struct TimingEngine {
    tau: f64,
    mshr: MshrState,
    d_prev: f64,
    out: TimingResult,
}

impl TimingEngine {
    fn new(tau: f64, mshr_capacity: usize, n: usize) -> Self {
        Self {
            tau,
            mshr: MshrState::new(mshr_capacity),
            d_prev: 0.0,
            out: TimingResult {
                tau,
                alpha: Vec::with_capacity(n),
                beta: Vec::with_capacity(n),
                commit: Vec::with_capacity(n),
                stall_flags: Vec::with_capacity(n),
                ..TimingResult::default()
            },
        }
    }

    fn step(&mut self, i: usize, ins: &InstructionRecord) {
        let tau = self.tau;
        let out = &mut self.out;
        let issue = ins.xi as f64 * tau;
        let (alpha, alpha_branch) = if !ins.is_memory {
            match ins.dep {
                Some(k) if later(out.beta[k], issue) => {
                    (out.beta[k] + tau, AlphaBranch::DataDep(k))
                }
                _ => (issue + tau, AlphaBranch::Issue),
            }
        } else {
            self.mshr.retire_until(issue);
            if self.mshr.is_full() {
                let (l, beta_l) = self.mshr.pop_head().expect("full buffer has a head");
                (beta_l + tau, AlphaBranch::MshrFull(l))
            } else {
                (issue + tau, AlphaBranch::Issue)
            }
        };
        let (beta, beta_branch) = if !ins.is_memory {
            (alpha + ins.mu as f64 * tau, BetaBranch::Own)
        } else if ins.cache_hit {
            (alpha + ins.nu as f64 * tau, BetaBranch::Own)
        } else {
            let own = alpha + (ins.nu + ins.m_cycles) as f64 * tau + ins.mem_latency;
            let pick = match self.mshr.last() {
                Some((j, beta_j)) if later(beta_j + tau, own) => {
                    (beta_j + tau, BetaBranch::MshrPredecessor(j))
                }
                _ => (own, BetaBranch::Own),
            };
            self.mshr.push(i, pick.0);
            pick
        };
        let (commit, commit_branch) = if later(self.d_prev, beta) {
            (self.d_prev + tau, CommitBranch::RobOrder)
        } else {
            (beta + tau, CommitBranch::AfterExecution)
        };
        self.d_prev = commit;
        out.alpha.push(alpha);
        out.beta.push(beta);
        out.commit.push(commit);
        out.stall_flags.push(StallFlags {
            alpha: alpha_branch,
            beta: beta_branch,
            commit: commit_branch,
        });
    }
}

/// Issue, execution and commit times at clock period `tau`.
pub fn timing_pass(trace: &[InstructionRecord], tau: f64, mshr_capacity: usize) -> TimingResult {
    let mut engine = TimingEngine::new(tau, mshr_capacity, trace.len());
    for (i, ins) in trace.iter().enumerate() {
        engine.step(i, ins);
    }
    engine.out
}

/// Run a program on a core with a `rob_capacity`-entry reorder buffer.
///
/// The `xi` of the program are fetch cycles. An instruction issues no earlier
/// than the gap after its predecessor's issue and not before the instruction
/// `rob_capacity` places ahead has committed. Returns the trace with the
/// realized issue cycles, which `timing_pass` reproduces exactly, and its
/// timing.
pub fn issue_with_rob(
    program: &[InstructionRecord],
    tau: f64,
    mshr_capacity: usize,
    rob_capacity: usize,
) -> (Vec<InstructionRecord>, TimingResult) {
    let rob = rob_capacity.max(1);
    let mut engine = TimingEngine::new(tau, mshr_capacity, program.len());
    let mut observed = Vec::with_capacity(program.len());
    let mut prev: Option<(u64, u64)> = None;
    for (i, ins) in program.iter().enumerate() {
        let mut xi = match prev {
            Some((fetched, issued)) => issued + (ins.xi - fetched),
            None => ins.xi,
        };
        if i >= rob {
            let free = engine.out.commit[i - rob] / tau;
            // integer cycle at or after the slot frees, ignoring rounding noise
            let cycle = libm::ceil(free - 1e-9).max(0.0) as u64;
            xi = xi.max(cycle);
        }
        prev = Some((ins.xi, xi));
        let rec = InstructionRecord { xi, ..*ins };
        engine.step(i, &rec);
        observed.push(rec);
    }
    (observed, engine.out)
}

/// Fill the derivatives with respect to `tau` along the recorded branches.
pub fn ipa_pass(
    trace: &[InstructionRecord],
    tau: f64,
    mut timing: TimingResult,
) -> Result<TimingResult, PlantError> {
    let n = trace.len();
    if timing.stall_flags.len() != n || timing.beta.len() != n || timing.tau != tau {
        return Err(PlantError::InconsistentTiming);
    }
    let (mut ad, mut bd, mut dd) = (
        Vec::with_capacity(n),
        Vec::<f64>::with_capacity(n),
        Vec::<f64>::with_capacity(n),
    );
    for (i, (ins, flags)) in trace.iter().zip(&timing.stall_flags).enumerate() {
        let back = |k: usize| if k < i { Ok(k) } else { Err(PlantError::InconsistentTiming) };
        let a = match flags.alpha {
            AlphaBranch::Issue => ins.xi as f64 + 1.0,
            AlphaBranch::DataDep(k) | AlphaBranch::MshrFull(k) => bd[back(k)?] + 1.0,
        };
        let b = match flags.beta {
            BetaBranch::MshrPredecessor(j) => bd[back(j)?] + 1.0,
            BetaBranch::Own if !ins.is_memory => a + ins.mu as f64,
            BetaBranch::Own if ins.cache_hit => a + ins.nu as f64,
            BetaBranch::Own => a + (ins.nu + ins.m_cycles) as f64,
        };
        let d = match flags.commit {
            CommitBranch::RobOrder => dd[i - 1] + 1.0,
            CommitBranch::AfterExecution => b + 1.0,
        };
        ad.push(a);
        bd.push(b);
        dd.push(d);
    }
    timing.alpha_d = ad;
    timing.beta_d = bd;
    timing.commit_d = dd;
    Ok(timing)
}

/// Instructions per unit time.
pub fn throughput(m_instr: usize, d_m: f64) -> f64 {
    m_instr as f64 / d_m
}

/// Derivative of the throughput with respect to the clock rate.
pub fn throughput_derivative(y: f64, u: f64, m_instr: usize, dm_prime: f64) -> f64 {
    let r = y / u;
    r * r * dm_prime / m_instr as f64
}

/// Central difference of `d_M` in `tau` on a fixed trace, and whether the
/// branch record is identical at `tau - delta`, `tau` and `tau + delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommitDifference {
    pub value: f64,
    pub order_stable: bool,
}

pub fn crn_commit_derivative(
    trace: &[InstructionRecord],
    tau: f64,
    delta: f64,
    mshr_capacity: usize,
) -> CommitDifference {
    let lo = timing_pass(trace, tau - delta, mshr_capacity);
    let mid = timing_pass(trace, tau, mshr_capacity);
    let hi = timing_pass(trace, tau + delta, mshr_capacity);
    CommitDifference {
        value: (hi.d_m() - lo.d_m()) / (2.0 * delta),
        order_stable: lo.stall_flags == mid.stall_flags && hi.stall_flags == mid.stall_flags,
    }
}

/// Synthetic workload statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadProfile {
    pub mem_fraction: f64,
    pub cache_hit_prob: f64,
    pub dep_prob: f64,
    /// Dependency distance is uniform on `1..=dep_distance`.
    pub dep_distance: u32,
    pub mu_range: (u32, u32),
    pub nu_range: (u32, u32),
    pub m_range: (u32, u32),
    pub mem_latency_ns: f64,
    /// Relative spread of the DRAM latency around `mem_latency_ns`.
    pub mem_latency_spread: f64,
    pub mshr_capacity: usize,
    pub rob_capacity: usize,
    pub issue_gap_cycles: (u32, u32),
    /// Probability of a front-end bubble before an instruction.
    pub bubble_prob: f64,
    pub bubble_cycles: (u32, u32),
    /// Each control cycle scales the memory intensity and the bubble rate by
    /// a factor drawn uniformly from `[1 - phase_jitter, 1 + phase_jitter]`.
    pub phase_jitter: f64,
}

impl WorkloadProfile {
    /// Compute-bound preset: few memory operations, mostly cache hits.
    pub fn compute() -> Self {
        Self {
            mem_fraction: 0.1,
            cache_hit_prob: 0.95,
            dep_prob: 0.5,
            dep_distance: 8,
            mu_range: (1, 3),
            nu_range: (2, 4),
            m_range: (1, 2),
            mem_latency_ns: 30.0,
            mem_latency_spread: 0.2,
            mshr_capacity: 10,
            rob_capacity: 96,
            issue_gap_cycles: (0, 2),
            bubble_prob: 0.02,
            bubble_cycles: (5, 20),
            phase_jitter: 0.3,
        }
    }

    /// Memory-bound preset: frequent loads and a lower hit rate.
    pub fn memory() -> Self {
        Self {
            mem_fraction: 0.4,
            cache_hit_prob: 0.7,
            ..Self::compute()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "compute" => Some(Self::compute()),
            "memory" => Some(Self::memory()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let probs = [self.mem_fraction, self.cache_hit_prob, self.dep_prob, self.bubble_prob];
        if !probs.iter().all(|&p| prob(p)) {
            return Err(PlantError::InvalidConfig("probabilities must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.phase_jitter) || !(0.0..1.0).contains(&self.mem_latency_spread) {
            return Err(PlantError::InvalidConfig("jitter and spread must lie in [0, 1)"));
        }
        if self.mshr_capacity == 0 || self.rob_capacity == 0 || self.dep_distance == 0 {
            return Err(PlantError::InvalidConfig("capacities must be >= 1"));
        }
        let ranges = [
            self.mu_range,
            self.nu_range,
            self.m_range,
            self.issue_gap_cycles,
            self.bubble_cycles,
        ];
        if ranges.iter().any(|r| r.0 > r.1) {
            return Err(PlantError::InvalidConfig("integer ranges need lo <= hi"));
        }
        if self.mu_range.0 == 0 && self.mu_range.1 == 0 {
            return Err(PlantError::InvalidConfig("mu_range must allow nonzero cycles"));
        }
        if !(self.mem_latency_ns >= 0.0 && self.mem_latency_ns.is_finite()) {
            return Err(PlantError::InvalidConfig("mem_latency_ns must be >= 0"));
        }
        Ok(())
    }

    /// Profile with memory intensity and bubble rate scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mem_fraction: (self.mem_fraction * factor).clamp(0.0, 1.0),
            cache_hit_prob: (1.0 - (1.0 - self.cache_hit_prob) * factor).clamp(0.0, 1.0),
            bubble_prob: (self.bubble_prob * factor).clamp(0.0, 1.0),
            ..*self
        }
    }
}

fn draw_u32(stream: &mut RngStream, range: (u32, u32)) -> u32 {
    stream.int_inclusive(range.0, range.1)
}

/// `m_instr` instructions with fetch cycles starting at 0.
pub fn generate_trace(
    profile: &WorkloadProfile,
    m_instr: usize,
    stream: &mut RngStream,
) -> Result<Vec<InstructionRecord>, PlantError> {
    if m_instr == 0 {
        return Err(PlantError::InvalidConfig("need at least one instruction"));
    }
    profile.validate()?;
    let mut out = Vec::with_capacity(m_instr);
    let mut xi = 0u64;
    for i in 0..m_instr {
        if i > 0 {
            xi += u64::from(draw_u32(stream, profile.issue_gap_cycles));
            if stream.bernoulli(profile.bubble_prob) {
                xi += u64::from(draw_u32(stream, profile.bubble_cycles));
            }
        }
        let rec = if stream.bernoulli(profile.mem_fraction) {
            let nu = draw_u32(stream, profile.nu_range);
            if stream.bernoulli(profile.cache_hit_prob) {
                InstructionRecord::load_hit(i + 1, xi, nu)
            } else {
                let m = draw_u32(stream, profile.m_range);
                let s = profile.mem_latency_spread;
                let mem = profile.mem_latency_ns * stream.uniform(1.0 - s, 1.0 + s)?;
                InstructionRecord::load_miss(i + 1, xi, nu, m, mem)
            }
        } else {
            let mu = draw_u32(stream, profile.mu_range);
            let dep = if i > 0 && stream.bernoulli(profile.dep_prob) {
                let dist = stream.int_inclusive(1, profile.dep_distance) as usize;
                Some(i - dist.min(i))
            } else {
                None
            };
            InstructionRecord::compute(i + 1, xi, mu, dep)
        };
        out.push(rec);
    }
    Ok(out)
}

/// Throughput and its clock-rate derivative for one program run at clock
/// rate `u`. The derivative treats the realized issue cycles as given.
pub fn evaluate_program(
    program: &[InstructionRecord],
    u: f64,
    mshr_capacity: usize,
    rob_capacity: usize,
) -> Result<(PlantCycleResult, TimingResult), PlantError> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(PlantError::InvalidControl(u));
    }
    let tau = 1.0 / u;
    let (observed, timing) = issue_with_rob(program, tau, mshr_capacity, rob_capacity);
    let timing = ipa_pass(&observed, tau, timing)?;
    let m = program.len();
    let y = throughput(m, timing.d_m());
    let deriv = throughput_derivative(y, u, m, timing.d_m_prime());
    Ok((PlantCycleResult { y, deriv }, timing))
}

/// One control cycle: draw the workload phase and the next `m_instr`
/// instructions from `stream`, then run them at clock rate `u`.
pub fn simulate_core_cycle(
    u: f64,
    profile: &WorkloadProfile,
    m_instr: usize,
    stream: &mut RngStream,
) -> Result<PlantCycleResult, PlantError> {
    profile.validate()?;
    let j = profile.phase_jitter;
    let phase = if j > 0.0 { profile.scaled(stream.uniform(1.0 - j, 1.0 + j)?) } else { *profile };
    let trace = generate_trace(&phase, m_instr, stream)?;
    evaluate_program(&trace, u, profile.mshr_capacity, profile.rob_capacity).map(|r| r.0)
}

/// One virtual core running a continuing synthetic program.
#[derive(Debug)]
pub struct OooCorePlant {
    profile: WorkloadProfile,
    m_instr: usize,
    stream: RngStream,
}

impl OooCorePlant {
    pub fn new(profile: WorkloadProfile, m_instr: usize, seed: u64) -> Result<Self, PlantError> {
        Self::with_stream(profile, m_instr, RngStream::new(seed, 4))
    }

    pub fn with_stream(
        profile: WorkloadProfile,
        m_instr: usize,
        stream: RngStream,
    ) -> Result<Self, PlantError> {
        profile.validate()?;
        if m_instr == 0 {
            return Err(PlantError::InvalidConfig("need at least one instruction"));
        }
        Ok(Self {
            profile,
            m_instr,
            stream,
        })
    }
}

impl Plant for OooCorePlant {
    fn run_cycle(&mut self, u: f64) -> Result<PlantCycleResult, PlantError> {
        simulate_core_cycle(u, &self.profile, self.m_instr, &mut self.stream)
    }
}
