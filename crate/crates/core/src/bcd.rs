//! Block coordinate descent over the power and time blocks.
//!
//! One outer iteration solves the power block exactly for the current time
//! shares, then solves the time block for the new powers by sweeping the
//! slots with water-filling until the shares settle (or for a fixed number
//! of sweeps, see [`SolverOptions::max_time_sweeps`]). Both steps are ascent
//! steps, so the utility trace is non-decreasing.

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::sg_tdma_schedule;
use crate::model::{check_feasible, EnergyProfile, Instance, Schedule, SolverOptions};
use crate::power::solve_power;
use crate::time::{full_time_pass, solve_time_block};

/// Absolute slack allowed when comparing utilities of block optima.
const CERTIFICATE_TOL: f64 = 1e-6;
/// Relative utility loss still treated as rounding when accepting a block step.
const ROUNDING_SLACK: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct PartialOptimumCertificate {
    /// Utility gained by re-solving the power block at the fixed time shares.
    pub power_gap: f64,
    /// Utility gained by one more full time pass at the fixed powers.
    pub time_gap: f64,
    /// Whether the schedule is at least as good as the pair formed by the two
    /// freshly solved block optima (necessary condition for local optimality).
    pub cross_check_holds: bool,
}

impl PartialOptimumCertificate {
    pub fn is_partial_optimum(&self, tol: f64) -> bool {
        self.power_gap <= tol && self.time_gap <= tol
    }
}

#[derive(Debug, Clone)]
pub struct BcdReport {
    pub schedule: Schedule,
    /// Utility of the start, then after every power step and every time step.
    pub utility_trace: Vec<f64>,
    /// Outer iterations performed.
    pub iterations: usize,
    pub converged: bool,
    pub certificate: PartialOptimumCertificate,
    /// Largest power-block KKT residual seen at the last iteration.
    pub power_kkt_residual: f64,
    pub warnings: Vec<String>,
}

impl BcdReport {
    pub fn utility(&self) -> f64 {
        *self.utility_trace.last().expect("trace is never empty")
    }

    pub fn initial_utility(&self) -> f64 {
        self.utility_trace[0]
    }

    /// Utility after each outer iteration (index 0 is the start).
    pub fn outer_trace(&self) -> Vec<f64> {
        self.utility_trace.iter().step_by(2).copied().collect()
    }
}

/// SG+TDMA, or SG powers with equal time sharing when round-robin would
/// starve a user (fewer slots than users, or a user owning only dead slots).
pub fn initial_schedule(instance: &Instance) -> Result<Schedule> {
    match sg_tdma_schedule(instance) {
        Ok(s) if s.utility().is_ok() => Ok(s),
        other => {
            if let Err(e) = &other {
                debug!("SG+TDMA start unavailable ({e}); using equal time shares");
            }
            equal_share_schedule(instance)
        }
    }
}

pub fn equal_share_schedule(instance: &Instance) -> Result<Schedule> {
    let n = instance.num_users() as f64;
    let tau = vec![
        instance
            .profile
            .slot_lengths()
            .iter()
            .map(|t| t / n)
            .collect::<Vec<_>>();
        instance.num_users()
    ];
    instance.schedule(instance.profile.sg_powers(), tau)
}

/// Random strictly positive time shares and random energy-feasible powers.
pub fn random_feasible_start<R: Rng>(instance: &Instance, rng: &mut R) -> Result<Schedule> {
    let n = instance.num_users();
    let profile = &instance.profile;
    let mut tau = vec![vec![0.0; profile.num_slots()]; n];
    for (t, &len) in profile.slot_lengths().iter().enumerate() {
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (row, w) in tau.iter_mut().zip(&weights) {
            row[t] = len * w / total;
        }
    }
    let powers = profile
        .sg_powers()
        .iter()
        .map(|p| p * rng.gen_range(0.2..1.0))
        .collect();
    instance.schedule(powers, tau)
}

/// Runs BCD from the SG+TDMA start.
pub fn run_bcd(instance: &Instance, opts: &SolverOptions) -> Result<BcdReport> {
    let start = initial_schedule(instance)?;
    run_bcd_from(start, instance, opts)
}

/// Runs BCD from an arbitrary feasible start.
pub fn run_bcd_from(start: Schedule, instance: &Instance, opts: &SolverOptions) -> Result<BcdReport> {
    opts.validate()?;
    let start_report = check_feasible(&start, &instance.profile, opts)?;
    if !start_report.is_feasible() {
        return Err(Error::Setup(format!(
            "infeasible start: {:?}",
            start_report.violations
        )));
    }
    let mut sched = start;
    let mut current = sched.utility().unwrap_or(f64::NEG_INFINITY);
    let mut trace = vec![current];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut power_kkt_residual = f64::NAN;

    while iterations < opts.max_bcd_iters {
        iterations += 1;
        let before = sched.clone();
        let outer_start = current;

        let sol = solve_power(sched.time_alloc(), instance, opts)?;
        power_kkt_residual = sol.kkt_residual;
        if !sol.converged {
            debug!("iteration {iterations}: power block residual {:.3e}", sol.kkt_residual);
        }
        let candidate = sched.with_powers(sol.powers, &instance.users, &instance.params);
        let u = candidate.utility()?;
        let slack = ROUNDING_SLACK * current.abs().max(1.0);
        if u >= current - slack {
            sched = candidate;
            current = u;
        } else {
            debug!("iteration {iterations}: power step lost {:.3e}, kept incumbent", current - u);
        }
        trace.push(current);

        let next = solve_time_block(&sched, instance, opts, opts.time_sweep_tol, opts.max_time_sweeps)?;
        let u = next.utility()?;
        if u >= current - slack {
            sched = next;
            current = u;
        }
        trace.push(current);

        let report = check_feasible(&sched, &instance.profile, opts)?;
        if !report.is_feasible() {
            return Err(Error::Precondition(format!(
                "iterate {iterations} left the feasible set: {:?}",
                report.violations
            )));
        }
        if !report.near_minimum_time.is_empty() {
            let msg = format!(
                "iteration {iterations}: users {:?} within 10x of the minimum total time",
                report.near_minimum_time
            );
            warn!("{msg}");
            warnings.push(msg);
        }

        let rel = (current - outer_start).abs() / current.abs().max(f64::MIN_POSITIVE);
        let moved = sched.max_abs_diff(&before);
        debug!("iteration {iterations}: U {current:.10}, rel {rel:.3e}, moved {moved:.3e}");
        if rel < opts.utility_tol && moved < opts.var_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("BCD stopped at {iterations} iterations without converging");
    }
    info!("BCD finished: U = {current:.6} after {iterations} iterations");

    let certificate = verify_partial_optimum(&sched, instance, opts)?;
    Ok(BcdReport {
        schedule: sched,
        utility_trace: trace,
        iterations,
        converged,
        certificate,
        power_kkt_residual,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct MultistartReport {
    /// The SG+TDMA run first, then one run per random start.
    pub runs: Vec<BcdReport>,
    pub best: usize,
}

impl MultistartReport {
    pub fn best_run(&self) -> &BcdReport {
        &self.runs[self.best]
    }
}

/// SG+TDMA plus `random_starts` seeded random feasible starts, run in
/// parallel.
pub fn run_multistart(
    instance: &Instance,
    opts: &SolverOptions,
    random_starts: usize,
    seed: u64,
) -> Result<MultistartReport> {
    let mut starts = vec![initial_schedule(instance)?];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_starts {
        starts.push(random_feasible_start(instance, &mut rng)?);
    }
    let runs: Vec<BcdReport> = starts
        .into_par_iter()
        .map(|s| run_bcd_from(s, instance, opts))
        .collect::<Result<_>>()?;
    let best = runs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.utility().total_cmp(&b.1.utility()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(MultistartReport { runs, best })
}

/// Measures how far `sched` is from a partial optimum.
pub fn verify_partial_optimum(
    sched: &Schedule,
    instance: &Instance,
    opts: &SolverOptions,
) -> Result<PartialOptimumCertificate> {
    let base = sched.utility()?;

    let power_opt = solve_power(sched.time_alloc(), instance, opts)?;
    let power_sched = sched.with_powers(power_opt.powers.clone(), &instance.users, &instance.params);
    let power_gap = power_sched.utility()? - base;

    let time_gap = full_time_pass(sched, instance, opts)?.utility()? - base;

    // Cross combination of the two block optimizers.
    let time_opt = solve_time_block(sched, instance, opts, 1e-12, 500)?;
    let cross = time_opt.with_powers(power_opt.powers, &instance.users, &instance.params);
    let cross_check_holds = base >= cross.utility()? - CERTIFICATE_TOL;

    Ok(PartialOptimumCertificate {
        power_gap,
        time_gap,
        cross_check_holds,
    })
}

/// Energy left unspent at the end of the frame, `sum E - sum p_t T_t`.
pub fn energy_exhaustion_check(sched: &Schedule, profile: &EnergyProfile) -> f64 {
    let spent: f64 = sched
        .powers()
        .iter()
        .zip(profile.slot_lengths())
        .map(|(p, t)| p * t)
        .sum();
    profile.total_energy() - spent
}
