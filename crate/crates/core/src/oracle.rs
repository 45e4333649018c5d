//! Independent reference computations: exhaustive power grids for tiny
//! instances, finite differences and randomized concavity probes.
//!
//! Nothing here calls the barrier solver or the BCD driver, so the results
//! can be used to check them.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{power_gradient, Instance, Schedule, SolverOptions};
use crate::time::solve_time_block;

pub const MAX_ORACLE_USERS: usize = 3;
pub const MAX_ORACLE_SLOTS: usize = 3;
pub const DEFAULT_SEED: u64 = 0x5eed_2012;

/// Inner fixed-point tolerance of the time block inside the oracle.
const TIME_BLOCK_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub utility: f64,
    pub schedule: Schedule,
    pub step: f64,
    /// Estimated utility gap between the best grid point and the true
    /// optimum: `step * ||grad_p U||_1`, doubled.
    pub resolution_bound: f64,
    pub evaluated: usize,
}

/// Best utility over an energy-feasible power grid with the time block
/// solved to optimality at every grid point.
///
/// The last slot always spends whatever energy is left, since the utility is
/// non-decreasing in every power. The result is a lower bound on the global
/// optimum.
pub fn grid_global_optimum(instance: &Instance, step: f64) -> Result<OracleResult> {
    check_size(instance)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("grid step must be positive, got {step}")));
    }
    let profile = &instance.profile;
    let k = profile.num_slots();
    let lengths = profile.slot_lengths().to_vec();
    let cum = profile.cumulative_energy();

    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for t in 0..k - 1 {
        let mut next = Vec::new();
        for p in &points {
            let spent: f64 = p.iter().zip(&lengths).map(|(a, b)| a * b).sum();
            let room = ((cum[t] - spent) / lengths[t]).max(0.0);
            let count = (room / step + 1e-9).floor() as usize;
            for i in 0..=count {
                let mut q = p.clone();
                q.push(i as f64 * step);
                next.push(q);
            }
        }
        points = next;
    }
    let points: Vec<Vec<f64>> = points
        .into_iter()
        .map(|mut p| {
            let spent: f64 = p.iter().zip(&lengths).map(|(a, b)| a * b).sum();
            p.push(((cum[k - 1] - spent) / lengths[k - 1]).max(0.0));
            p
        })
        .collect();
    best_over(instance, &points, step)
}

/// Repeatedly re-grids a shrinking box around the best point until the
/// step drops below `final_step`.
pub fn refine_optimum(instance: &Instance, coarse: &OracleResult, final_step: f64) -> Result<OracleResult> {
    check_size(instance)?;
    let profile = &instance.profile;
    let k = profile.num_slots();
    let lengths = profile.slot_lengths().to_vec();
    let cum = profile.cumulative_energy();
    let mut best = coarse.clone();
    let mut step = coarse.step;
    const SUBDIV: usize = 8;
    while step > final_step {
        let fine = step / SUBDIV as f64;
        let center = best.schedule.powers().to_vec();
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        for t in 0..k - 1 {
            let mut next = Vec::new();
            for p in &points {
                let spent: f64 = p.iter().zip(&lengths).map(|(a, b)| a * b).sum();
                let room = ((cum[t] - spent) / lengths[t]).max(0.0);
                for i in -(2 * SUBDIV as i64)..=(2 * SUBDIV as i64) {
                    let v = center[t] + i as f64 * fine;
                    if v >= 0.0 && v <= room {
                        let mut q = p.clone();
                        q.push(v);
                        next.push(q);
                    }
                }
            }
            points = next;
        }
        let points: Vec<Vec<f64>> = points
            .into_iter()
            .filter_map(|mut p| {
                let spent: f64 = p.iter().zip(&lengths).map(|(a, b)| a * b).sum();
                let last = (cum[k - 1] - spent) / lengths[k - 1];
                (last >= 0.0).then(|| {
                    p.push(last);
                    p
                })
            })
            .collect();
        let candidate = best_over(instance, &points, fine)?;
        if candidate.utility >= best.utility {
            best = candidate;
        } else {
            best.step = fine;
        }
        step = fine;
    }
    Ok(best)
}

fn check_size(instance: &Instance) -> Result<()> {
    if instance.num_users() > MAX_ORACLE_USERS || instance.num_slots() > MAX_ORACLE_SLOTS {
        return Err(Error::TooLarge(format!(
            "{} users x {} slots exceeds {MAX_ORACLE_USERS} x {MAX_ORACLE_SLOTS}",
            instance.num_users(),
            instance.num_slots()
        )));
    }
    Ok(())
}

fn best_over(instance: &Instance, points: &[Vec<f64>], step: f64) -> Result<OracleResult> {
    let opts = SolverOptions::default();
    let n = instance.num_users();
    let equal: Vec<Vec<f64>> = vec![
        instance
            .profile
            .slot_lengths()
            .iter()
            .map(|t| t / n as f64)
            .collect();
        n
    ];
    let best = points
        .par_iter()
        .filter_map(|p| {
            let start = instance.schedule(p.clone(), equal.clone()).ok()?;
            start.utility().ok()?;
            let s = solve_time_block(&start, instance, &opts, TIME_BLOCK_TOL, 10_000).ok()?;
            let u = s.utility().ok()?;
            Some((u, s))
        })
        .max_by(|a, b| a.0.total_cmp(&b.0));
    let (utility, schedule) = best.ok_or_else(|| Error::Setup("no grid point has positive utility".into()))?;
    let grad = power_gradient(schedule.time_alloc(), schedule.powers(), &instance.users, &instance.params)?;
    let resolution_bound = 2.0 * step * grad.iter().map(|g| g.abs()).sum::<f64>();
    Ok(OracleResult {
        utility,
        schedule,
        step,
        resolution_bound,
        evaluated: points.len(),
    })
}

/// Central differences with a fixed step.
pub fn finite_diff_gradient<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian with a fixed step.
pub fn finite_diff_hessian<F>(f: F, x: &[f64], h: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut probe = x.to_vec();
    let f0 = f(x);
    for i in 0..n {
        for j in i..n {
            let v = if i == j {
                probe[i] = x[i] + h;
                let up = f(&probe);
                probe[i] = x[i] - h;
                let down = f(&probe);
                probe[i] = x[i];
                (up - 2.0 * f0 + down) / (h * h)
            } else {
                let mut eval = |si: f64, sj: f64| {
                    probe[i] = x[i] + si * h;
                    probe[j] = x[j] + sj * h;
                    let v = f(&probe);
                    probe[i] = x[i];
                    probe[j] = x[j];
                    v
                };
                (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h)
            };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

pub fn max_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    /// `f(mix) >= mix of f` up to tolerance.
    Concave,
    /// `f(mix) == mix of f` up to tolerance.
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub passed: bool,
    pub worst_violation: f64,
    pub trials: usize,
}

pub const PROBE_TOL: f64 = 1e-9;

/// Samples `(x1, x2, lambda)` and checks the interpolation inequality of a
/// concave (or affine) function. `sampler` must return points of the domain;
/// the domain must be convex.
pub fn concavity_probe<F, S>(f: F, mut sampler: S, trials: usize, kind: ProbeKind, seed: u64) -> ProbeResult
where
    F: Fn(&[f64]) -> f64,
    S: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials.max(1) {
        let a = sampler(&mut rng);
        let b = sampler(&mut rng);
        let lambda: f64 = rng.gen_range(0.0..=1.0);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
        let chord = lambda * f(&a) + (1.0 - lambda) * f(&b);
        let at_mix = f(&mix);
        let violation = match kind {
            ProbeKind::Concave => (chord - at_mix).max(0.0),
            ProbeKind::Affine => (chord - at_mix).abs(),
        };
        if violation.is_nan() {
            worst = f64::INFINITY;
        } else {
            worst = worst.max(violation);
        }
    }
    ProbeResult {
        passed: worst <= PROBE_TOL,
        worst_violation: worst,
        trials: trials.max(1),
    }
}
