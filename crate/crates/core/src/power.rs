//! Power block: maximize the log-utility over the power vector with the time
//! shares held fixed, subject to non-negativity and cumulative energy
//! causality.
//!
//! The problem is strictly concave whenever every user has some time, so it
//! has a single maximizer. It is solved by a sequence of log-barrier
//! problems (damped Newton with backtracking), followed by an active-set
//! Newton polish on the constraints the barrier path identified as binding.

use std::f64::consts::LN_2;

use log::{debug, trace};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    log_utility, power_gradient, rate, rate_curvature, rate_slope, user_bits, Instance,
    SolverOptions,
};
use crate::nnls::nnls;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 80;
const MAX_BARRIER_ROUNDS: usize = 80;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub powers: Vec<f64>,
    pub kkt_residual: f64,
    pub inner_iterations: usize,
    pub converged: bool,
}

/// Solves the power block from the default strictly interior start.
pub fn solve_power(
    time_alloc: &[Vec<f64>],
    instance: &Instance,
    opts: &SolverOptions,
) -> Result<PowerSolution> {
    let start = interior_start(instance);
    solve_power_from(time_alloc, &start, instance, opts)
}

/// Solves the power block starting from `start`, which must be strictly
/// inside every constraint that can be strictly satisfied.
pub fn solve_power_from(
    time_alloc: &[Vec<f64>],
    start: &[f64],
    instance: &Instance,
    opts: &SolverOptions,
) -> Result<PowerSolution> {
    let problem = PowerProblem::new(time_alloc, instance, opts)?;
    if start.len() != problem.k {
        return Err(Error::Shape(format!(
            "start has {} powers for {} slots",
            start.len(),
            problem.k
        )));
    }
    let mut x: Vec<f64> = start[problem.first_free..].to_vec();
    if !problem.strictly_feasible(&x) {
        return Err(Error::Precondition(
            "power start is not strictly inside the energy constraints".into(),
        ));
    }

    let bopts = &opts.barrier;
    let mut weight = bopts.initial_weight;
    let mut iterations = 0;
    let mut centered = true;
    for round in 0..MAX_BARRIER_ROUNDS {
        let (iters, ok) = problem.center(&mut x, weight, bopts.inner_tol, bopts.max_inner_iters);
        iterations += iters;
        centered &= ok;
        let u = problem.utility(&x)?;
        trace!("barrier round {round}: weight {weight:.3e}, U {u:.12}, newton {iters}");
        if 2.0 * problem.num_free() as f64 * weight < bopts.gap_ratio * u.abs().max(1.0) {
            break;
        }
        weight /= bopts.growth;
    }

    let barrier_powers = problem.expand(&x);
    let barrier_residual = kkt_residual_power(&barrier_powers, time_alloc, instance);
    let barrier_utility = problem.utility(&x)?;

    let mut powers = barrier_powers;
    let mut residual = barrier_residual;
    if let Some((polished, iters)) = problem.polish(&x, weight) {
        iterations += iters;
        let p = problem.expand(&polished);
        let r = kkt_residual_power(&p, time_alloc, instance);
        let u = problem.utility(&polished)?;
        if r <= residual && u >= barrier_utility - 1e-12 * barrier_utility.abs().max(1.0) {
            powers = p;
            residual = r;
        } else {
            debug!("polish rejected: residual {r:.3e} vs {residual:.3e}");
        }
    }

    if !centered {
        debug!("barrier centering stalled; kkt residual {residual:.3e}");
    }
    Ok(PowerSolution {
        converged: residual <= bopts.inner_tol,
        powers,
        kkt_residual: residual,
        inner_iterations: iterations,
    })
}

/// Default strictly interior start: half the SG powers when every slot
/// harvests something. Otherwise half of the largest constant-rate spending
/// that respects every later cumulative budget,
/// `p_t = 0.5 * min_{j >= t} C_j / S_j`, which stays positive in slots that
/// harvest nothing. Slots before the first harvest get zero either way.
pub fn interior_start(instance: &Instance) -> Vec<f64> {
    let profile = &instance.profile;
    if profile.harvests().iter().all(|&e| e > 0.0) {
        return profile.sg_powers().iter().map(|p| 0.5 * p).collect();
    }
    let cum_e = profile.cumulative_energy();
    let lengths = profile.slot_lengths();
    let k = lengths.len();
    let mut cum_t = vec![0.0; k];
    let mut acc = 0.0;
    for t in 0..k {
        acc += lengths[t];
        cum_t[t] = acc;
    }
    let mut out = vec![0.0; k];
    let mut suffix_min = f64::INFINITY;
    for t in (0..k).rev() {
        suffix_min = suffix_min.min(cum_e[t] / cum_t[t]);
        out[t] = 0.5 * suffix_min;
    }
    out
}

/// Norm of the KKT stationarity residual of the power block at `powers`.
///
/// The utility gradient is matched against the normals of the active
/// constraints (cumulative energy and non-negativity) with non-negative
/// multipliers fitted by least squares. Returns `+inf` where the utility is
/// undefined.
pub fn kkt_residual_power(powers: &[f64], time_alloc: &[Vec<f64>], instance: &Instance) -> f64 {
    power_kkt(powers, time_alloc, instance)
        .map(|c| c.residual)
        .unwrap_or(f64::INFINITY)
}

/// Stationarity certificate of the power block.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerKkt {
    pub residual: f64,
    /// Multipliers of the cumulative energy constraints (0 when inactive).
    pub energy_multipliers: Vec<f64>,
    /// Multipliers of `p_t >= 0` (0 when inactive).
    pub nonneg_multipliers: Vec<f64>,
}

pub fn power_kkt(
    powers: &[f64],
    time_alloc: &[Vec<f64>],
    instance: &Instance,
) -> Result<PowerKkt> {
    let profile = &instance.profile;
    let k = profile.num_slots();
    if powers.len() != k {
        return Err(Error::Shape(format!("{} powers for {k} slots", powers.len())));
    }
    let grad = power_gradient(time_alloc, powers, &instance.users, &instance.params)?;
    let cum_e = profile.cumulative_energy();
    let lengths = profile.slot_lengths();
    let energy_act = 1e-6 * (1.0 + profile.total_energy());
    let power_act = 1e-9 * (1.0 + powers.iter().fold(0.0f64, |m, p| m.max(p.abs())));

    let mut columns: Vec<(bool, usize)> = Vec::new();
    let mut spent = 0.0;
    for j in 0..k {
        spent += powers[j] * lengths[j];
        if cum_e[j] - spent <= energy_act {
            columns.push((true, j));
        }
    }
    for (t, &p) in powers.iter().enumerate() {
        if p <= power_act {
            columns.push((false, t));
        }
    }
    let mut a = DMatrix::zeros(k, columns.len());
    for (c, &(energy, idx)) in columns.iter().enumerate() {
        if energy {
            for i in 0..=idx {
                a[(i, c)] = lengths[i];
            }
        } else {
            a[(idx, c)] = -1.0;
        }
    }
    let (mult, residual) = nnls(&a, &DVector::from_vec(grad));
    let mut energy_multipliers = vec![0.0; k];
    let mut nonneg_multipliers = vec![0.0; k];
    for (c, &(energy, idx)) in columns.iter().enumerate() {
        if energy {
            energy_multipliers[idx] = mult[c];
        } else {
            nonneg_multipliers[idx] = mult[c];
        }
    }
    Ok(PowerKkt {
        residual,
        energy_multipliers,
        nonneg_multipliers,
    })
}

/// The power block restricted to the slots whose power can be positive.
struct PowerProblem<'a> {
    time_alloc: &'a [Vec<f64>],
    instance: &'a Instance,
    k: usize,
    /// Slots before this index have no energy available and stay at zero.
    first_free: usize,
    lengths: Vec<f64>,
    cum_energy: Vec<f64>,
}

struct Eval {
    grad: Vec<f64>,
    hess: DMatrix<f64>,
}

impl<'a> PowerProblem<'a> {
    fn new(time_alloc: &'a [Vec<f64>], instance: &'a Instance, opts: &SolverOptions) -> Result<Self> {
        let profile = &instance.profile;
        let k = profile.num_slots();
        let n = instance.num_users();
        if time_alloc.len() != n || time_alloc.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("time matrix must be {n}x{k}")));
        }
        if time_alloc.iter().flatten().any(|&v| !(v >= 0.0)) {
            return Err(Error::Precondition("negative time share".into()));
        }
        for (t, &len) in profile.slot_lengths().iter().enumerate() {
            let s: f64 = time_alloc.iter().map(|r| r[t]).sum();
            if (s - len).abs() > opts.time_budget_tol.max(1e-9 * len) {
                return Err(Error::Precondition(format!(
                    "slot {t} shares sum to {s}, slot length is {len}"
                )));
            }
        }
        let eps = opts.epsilon_for(profile);
        for (user, row) in time_alloc.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if total < eps {
                return Err(Error::Precondition(format!(
                    "user {user} has total time {total} below minimum {eps}"
                )));
            }
        }
        let cum_energy = profile.cumulative_energy();
        let first_free = cum_energy.iter().position(|&c| c > 0.0).unwrap_or(k);
        for (user, row) in time_alloc.iter().enumerate() {
            if row[first_free..].iter().all(|&v| v <= 0.0) {
                return Err(Error::Precondition(format!(
                    "user {user} is only served before the first harvest"
                )));
            }
        }
        Ok(Self {
            time_alloc,
            instance,
            k,
            first_free,
            lengths: profile.slot_lengths().to_vec(),
            cum_energy,
        })
    }

    fn num_free(&self) -> usize {
        self.k - self.first_free
    }

    fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.first_free];
        p.extend(x.iter().map(|v| v.max(0.0)));
        p
    }

    /// Slacks of the cumulative energy constraints over the free slots.
    fn slacks(&self, x: &[f64]) -> Vec<f64> {
        let mut spent = 0.0;
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                let t = self.first_free + i;
                spent += xi * self.lengths[t];
                self.cum_energy[t] - spent
            })
            .collect()
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| v > 0.0) && self.slacks(x).iter().all(|&s| s > 0.0)
    }

    fn utility(&self, x: &[f64]) -> Result<f64> {
        let p = self.expand(x);
        let rates = self.instance.rate_matrix(&p);
        log_utility(&user_bits(self.time_alloc, &rates))
    }

    fn evaluate(&self, x: &[f64]) -> Option<Eval> {
        let m = self.num_free();
        let w = self.instance.params.bandwidth_hz;
        let mut grad = vec![0.0; m];
        let mut hess = DMatrix::zeros(m, m);
        let mut slope = vec![0.0; m];
        for (row, user) in self.time_alloc.iter().zip(&self.instance.users) {
            let l = user.norm_gain();
            let mut bits = 0.0;
            for i in 0..m {
                let t = self.first_free + i;
                bits += row[t] * rate(l, x[i], w);
                slope[i] = row[t] * rate_slope(l, x[i], w);
            }
            if !(bits > 0.0) {
                return None;
            }
            let inv = 1.0 / (bits * LN_2);
            for i in 0..m {
                let t = self.first_free + i;
                grad[i] += slope[i] * inv;
                hess[(i, i)] += row[t] * rate_curvature(l, x[i], w) * inv;
                for j in 0..m {
                    hess[(i, j)] -= slope[i] * slope[j] * inv / bits;
                }
            }
        }
        Some(Eval {
            grad,
            hess,
        })
    }

    /// Barrier objective to minimize: `-U - weight * sum(log)`.
    fn barrier_value(&self, x: &[f64], weight: f64) -> Option<f64> {
        if !self.strictly_feasible(x) {
            return None;
        }
        let u = self.utility(x).ok()?;
        let logs: f64 = x.iter().map(|v| v.ln()).sum::<f64>()
            + self.slacks(x).iter().map(|s| s.ln()).sum::<f64>();
        Some(-u - weight * logs)
    }

    /// Damped Newton on the barrier problem. Returns iterations used and
    /// whether the Newton decrement reached the tolerance.
    fn center(&self, x: &mut [f64], weight: f64, tol: f64, max_iters: usize) -> (usize, bool) {
        let m = self.num_free();
        for it in 0..max_iters {
            let Some(ev) = self.evaluate(x) else {
                return (it, false);
            };
            let slacks = self.slacks(x);
            // Gradient and Hessian of -U - weight * log-barrier.
            let mut g = DVector::from_iterator(m, ev.grad.iter().map(|v| -v));
            let mut h = -ev.hess;
            for i in 0..m {
                g[i] -= weight / x[i];
                h[(i, i)] += weight / (x[i] * x[i]);
            }
            // Constraint j covers free slots 0..=j.
            let mut tail = 0.0;
            let mut inv_s2 = vec![0.0; m];
            for j in (0..m).rev() {
                tail += weight / slacks[j];
                inv_s2[j] = weight / (slacks[j] * slacks[j]);
                g[j] += tail * self.lengths[self.first_free + j];
            }
            let mut suffix = 0.0;
            let mut cover = vec![0.0; m];
            for j in (0..m).rev() {
                suffix += inv_s2[j];
                cover[j] = suffix;
            }
            for a in 0..m {
                for b in 0..m {
                    let ta = self.lengths[self.first_free + a];
                    let tb = self.lengths[self.first_free + b];
                    h[(a, b)] += ta * tb * cover[a.max(b)];
                }
            }

            let mut dir = match h.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => -&g,
            };
            let mut slope = g.dot(&dir);
            if !(slope < 0.0) {
                dir = -&g;
                slope = g.dot(&dir);
            }
            let decrement = -slope;
            if decrement / 2.0 <= tol {
                return (it, true);
            }

            let f0 = match self.barrier_value(x, weight) {
                Some(v) => v,
                None => return (it, false),
            };
            let mut step = 1.0;
            let mut accepted = false;
            let mut trial = x.to_vec();
            for _ in 0..MAX_HALVINGS {
                for i in 0..m {
                    trial[i] = x[i] + step * dir[i];
                }
                if let Some(f) = self.barrier_value(&trial, weight) {
                    if f <= f0 + ARMIJO * step * slope {
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                // No progress possible at floating-point resolution.
                return (it, decrement / 2.0 <= tol.sqrt());
            }
            x.copy_from_slice(&trial);
        }
        (max_iters, false)
    }

    /// Equality-constrained Newton on the constraints that bind along the
    /// barrier path, with primal active-set corrections.
    fn polish(&self, x0: &[f64], weight: f64) -> Option<(Vec<f64>, usize)> {
        let m = self.num_free();
        let slacks = self.slacks(x0);
        // A constraint binds when its barrier multiplier estimate
        // weight/slack dominates its slack.
        let mut energy_active: Vec<bool> = slacks
            .iter()
            .map(|&s| s * s <= weight * (1.0 + self.cum_energy[self.k - 1]))
            .collect();
        let max_x = x0.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut zero_active: Vec<bool> = x0.iter().map(|&v| v * v <= weight * (1.0 + max_x)).collect();

        let mut x = x0.to_vec();
        let mut iterations = 0;
        for _ in 0..(4 * m + 10) {
            let mut converged = false;
            let mut mults = Vec::new();
            for _ in 0..50 {
                iterations += 1;
                let ev = self.evaluate(&x)?;
                let rows = self.active_rows(&energy_active, &zero_active);
                let q = rows.len();
                let size = m + q;
                let mut kkt = DMatrix::zeros(size, size);
                let mut rhs = DVector::zeros(size);
                for a in 0..m {
                    for b in 0..m {
                        kkt[(a, b)] = -ev.hess[(a, b)];
                    }
                    rhs[a] = ev.grad[a];
                }
                for (r, (normal, bound)) in rows.iter().enumerate() {
                    let mut lhs = 0.0;
                    for i in 0..m {
                        kkt[(m + r, i)] = normal[i];
                        kkt[(i, m + r)] = normal[i];
                        lhs += normal[i] * x[i];
                    }
                    rhs[m + r] = bound - lhs;
                }
                let sol = kkt.lu().solve(&rhs)?;
                let d = sol.rows(0, m).into_owned();
                mults = sol.rows(m, q).iter().copied().collect();

                // Largest step keeping inactive constraints satisfied.
                let mut alpha = 1.0;
                let mut blocking = None;
                let cur_slack = self.slacks(&x);
                let mut dspent = 0.0;
                for i in 0..m {
                    dspent += d[i] * self.lengths[self.first_free + i];
                    if !energy_active[i] && dspent > 0.0 && cur_slack[i] - alpha * dspent < 0.0 {
                        alpha = (cur_slack[i] / dspent).max(0.0);
                        blocking = Some((true, i));
                    }
                }
                for i in 0..m {
                    if !zero_active[i] && d[i] < 0.0 && x[i] + alpha * d[i] < 0.0 {
                        alpha = (-x[i] / d[i]).max(0.0);
                        blocking = Some((false, i));
                    }
                }
                for i in 0..m {
                    x[i] += alpha * d[i];
                }
                if let Some((energy, i)) = blocking {
                    if energy {
                        energy_active[i] = true;
                    } else {
                        zero_active[i] = true;
                        x[i] = 0.0;
                    }
                    mults.clear();
                    break;
                }
                let scale = 1.0 + x.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                if d.amax() <= 1e-14 * scale {
                    converged = true;
                    break;
                }
            }
            if !converged {
                continue;
            }
            // Drop the most negative multiplier, if any.
            let rows = self.row_ids(&energy_active, &zero_active);
            let worst = mults
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .filter(|(_, &v)| v < -1e-12);
            match worst {
                None => {
                    for v in x.iter_mut() {
                        *v = v.max(0.0);
                    }
                    return Some((x, iterations));
                }
                Some((r, _)) => {
                    let (energy, i) = rows[r];
                    if energy {
                        energy_active[i] = false;
                    } else {
                        zero_active[i] = false;
                    }
                }
            }
        }
        None
    }

    fn row_ids(&self, energy_active: &[bool], zero_active: &[bool]) -> Vec<(bool, usize)> {
        let mut ids: Vec<(bool, usize)> = (0..energy_active.len())
            .filter(|&j| energy_active[j])
            .map(|j| (true, j))
            .collect();
        ids.extend((0..zero_active.len()).filter(|&i| zero_active[i]).map(|i| (false, i)));
        ids
    }

    /// Active constraints written as `normal . x = bound`, with `normal`
    /// oriented so that the constraint reads `normal . x <= bound`.
    fn active_rows(&self, energy_active: &[bool], zero_active: &[bool]) -> Vec<(Vec<f64>, f64)> {
        let m = self.num_free();
        self.row_ids(energy_active, zero_active)
            .into_iter()
            .map(|(energy, j)| {
                let mut normal = vec![0.0; m];
                if energy {
                    for (i, v) in normal.iter_mut().enumerate().take(j + 1) {
                        *v = self.lengths[self.first_free + i];
                    }
                    (normal, self.cum_energy[self.first_free + j])
                } else {
                    normal[j] = -1.0;
                    (normal, 0.0)
                }
            })
            .collect()
    }
}
