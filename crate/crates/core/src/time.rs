//! Time block: per-slot water-filling of the time shares with powers fixed.
//!
//! For slot `t` with the other columns frozen, each user contributes
//! `log2(c_n + x_n R_nt)` where `c_n` is the bits it collects elsewhere.
//! Stationarity gives `x_n = max(0, level - c_n / R_nt)` with a common water
//! level `level = 1 / (mu ln 2)`, chosen so the shares fill the slot.

use std::f64::consts::LN_2;

use log::trace;

use crate::error::{Error, Result};
use crate::model::{rate, Instance, Schedule, SolverOptions};

const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SlotUpdate {
    pub slot_index: usize,
    pub shares: Vec<f64>,
    /// Lagrange multiplier of the slot budget (marginal utility per second).
    pub multiplier: f64,
}

/// Optimal shares of one slot given the bits each user collects elsewhere
/// (`offsets`) and the users' rates in this slot.
///
/// Users with zero rate get nothing. If every rate is zero the whole slot
/// goes to the user with the fewest bits (lowest index on ties) and the
/// multiplier is reported as 0.
pub fn waterfill(offsets: &[f64], rates: &[f64], budget: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Domain(format!("slot length must be positive, got {budget}")));
    }
    if offsets.len() != rates.len() {
        return Err(Error::Shape(format!(
            "{} offsets for {} rates",
            offsets.len(),
            rates.len()
        )));
    }
    let n = rates.len();
    let mut shares = vec![0.0; n];
    let served: Vec<usize> = (0..n).filter(|&i| rates[i] > 0.0).collect();
    if served.is_empty() {
        let winner = (0..n)
            .min_by(|&a, &b| offsets[a].total_cmp(&offsets[b]).then(a.cmp(&b)))
            .ok_or_else(|| Error::Shape("no users".into()))?;
        shares[winner] = budget;
        return Ok((shares, 0.0));
    }

    // Water level thresholds: user i is active once the level exceeds a_i.
    let thresholds: Vec<f64> = served.iter().map(|&i| offsets[i].max(0.0) / rates[i]).collect();
    let filled = |level: f64| -> f64 { thresholds.iter().map(|a| (level - a).max(0.0)).sum() };

    let mut lo = thresholds.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = thresholds.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + budget;
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if filled(mid) > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // Close the bracket exactly on the active set it identifies.
    let bracket = 0.5 * (lo + hi);
    let active: Vec<usize> = (0..served.len()).filter(|&j| thresholds[j] < bracket).collect();
    let mut level = if active.is_empty() {
        bracket
    } else {
        (budget + active.iter().map(|&j| thresholds[j]).sum::<f64>()) / active.len() as f64
    };
    let consistent = active.iter().all(|&j| thresholds[j] <= level)
        && (0..served.len()).all(|j| active.contains(&j) || thresholds[j] >= level);
    if !consistent {
        level = bracket;
    }
    for (j, &i) in served.iter().enumerate() {
        shares[i] = (level - thresholds[j]).max(0.0);
    }

    let total: f64 = shares.iter().sum();
    if (total - budget).abs() > tol {
        // Only reachable through rounding in degenerate brackets.
        let scale = budget / total;
        shares.iter_mut().for_each(|s| *s *= scale);
    }
    Ok((shares, 1.0 / (level * LN_2)))
}

/// Re-optimizes the shares of slot `t` with powers and every other column
/// held fixed.
pub fn solve_time_slot(
    t: usize,
    sched: &Schedule,
    instance: &Instance,
    opts: &SolverOptions,
) -> Result<SlotUpdate> {
    let k = instance.num_slots();
    if t >= k || sched.num_slots() != k || sched.num_users() != instance.num_users() {
        return Err(Error::Shape(format!("slot {t} out of range or schedule shape mismatch")));
    }
    let budget = instance.profile.slot_lengths()[t];
    let rates = slot_rates(sched, instance, t);
    let column = sched.column(t);
    let offsets: Vec<f64> = sched
        .user_bits()
        .iter()
        .zip(&column)
        .zip(&rates)
        .map(|((b, x), r)| (b - x * r).max(0.0))
        .collect();
    let (shares, multiplier) = waterfill(&offsets, &rates, budget, opts.waterfill_tol)?;
    Ok(SlotUpdate {
        slot_index: t,
        shares,
        multiplier,
    })
}

fn slot_rates(sched: &Schedule, instance: &Instance, t: usize) -> Vec<f64> {
    let p = sched.powers()[t];
    instance
        .users
        .iter()
        .map(|u| rate(u.norm_gain(), p, instance.params.bandwidth_hz))
        .collect()
}

/// One sweep of per-slot water-filling over `t = 0..K`, committing each
/// column before moving on.
pub fn full_time_pass(sched: &Schedule, instance: &Instance, opts: &SolverOptions) -> Result<Schedule> {
    let mut out = sched.clone();
    for t in 0..instance.num_slots() {
        let update = solve_time_slot(t, &out, instance, opts)?;
        let rates = slot_rates(&out, instance, t);
        out.set_column(t, &update.shares, &rates);
        if log::log_enabled!(log::Level::Trace) {
            trace!("slot {t}: mu {:.6e}, U {:?}", update.multiplier, out.utility().ok());
        }
    }
    out.refresh(&instance.users, &instance.params);
    Ok(out)
}

/// Repeats full passes until no share moves by more than `tol` (or
/// `max_passes` is hit). The result maximizes the utility over the time
/// block for the fixed powers.
pub fn solve_time_block(
    sched: &Schedule,
    instance: &Instance,
    opts: &SolverOptions,
    tol: f64,
    max_passes: usize,
) -> Result<Schedule> {
    let mut cur = sched.clone();
    for _ in 0..max_passes {
        let next = full_time_pass(&cur, instance, opts)?;
        let moved = next.max_abs_diff(&cur);
        cur = next;
        if moved <= tol {
            break;
        }
    }
    Ok(cur)
}

/// Largest violation of the water-filling KKT conditions for a column:
/// served users share the marginal `mu`, idle users sit at or below it.
pub fn waterfill_kkt_violation(offsets: &[f64], rates: &[f64], shares: &[f64], multiplier: f64) -> f64 {
    let mut worst = 0.0f64;
    for ((&c, &r), &x) in offsets.iter().zip(rates).zip(shares) {
        if r <= 0.0 {
            continue;
        }
        let marginal = r / ((c + x * r) * LN_2);
        let v = if x > 0.0 {
            (marginal - multiplier).abs()
        } else {
            (marginal - multiplier).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Water-filling KKT violation of every column of `sched`, maximized over
/// slots. Zero-power slots are skipped.
pub fn time_kkt_violation(sched: &Schedule, instance: &Instance) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..instance.num_slots() {
        let rates = slot_rates(sched, instance, t);
        if rates.iter().all(|&r| r <= 0.0) {
            continue;
        }
        let column = sched.column(t);
        let offsets: Vec<f64> = sched
            .user_bits()
            .iter()
            .zip(&column)
            .zip(&rates)
            .map(|((b, x), r)| (b - x * r).max(0.0))
            .collect();
        // Common marginal of the served users.
        let served: Vec<f64> = (0..rates.len())
            .filter(|&n| column[n] > 0.0 && rates[n] > 0.0)
            .map(|n| rates[n] / ((offsets[n] + column[n] * rates[n]) * LN_2))
            .collect();
        if served.is_empty() {
            continue;
        }
        let mu = served.iter().sum::<f64>() / served.len() as f64;
        worst = worst.max(waterfill_kkt_violation(&offsets, &rates, &column, mu));
    }
    worst
}
