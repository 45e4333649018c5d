//! Domain types for the energy-harvesting downlink, the Shannon rate law,
//! the log-utility objective and feasibility checking.
//!
//! Indices are zero-based throughout: user `n` in `0..N`, slot `t` in `0..K`.
//! Time allocations are stored user-major (`time_alloc[n][t]`).

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bandwidth and noise spectral density shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub bandwidth_hz: f64,
    pub noise_density: f64,
}

impl SystemParams {
    pub fn new(bandwidth_hz: f64, noise_density: f64) -> Result<Self> {
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth_hz}")));
        }
        if !(noise_density > 0.0 && noise_density.is_finite()) {
            return Err(Error::Domain(format!(
                "noise density must be positive, got {noise_density}"
            )));
        }
        Ok(Self {
            bandwidth_hz,
            noise_density,
        })
    }

    /// Total in-band noise power `N_o * W`.
    pub fn noise_power(&self) -> f64 {
        self.noise_density * self.bandwidth_hz
    }
}

impl Default for SystemParams {
    /// W = 1 kHz, N_o = 1e-6 W/Hz.
    fn default() -> Self {
        Self {
            bandwidth_hz: 1000.0,
            noise_density: 1e-6,
        }
    }
}

/// Static channel of one receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserChannel {
    path_loss_db: f64,
    gain: f64,
    norm_gain: f64,
}

impl UserChannel {
    /// Builds a channel from a path loss in dB, using the power-ratio
    /// conversion `g = 10^(-PL/10)` and `L = g / (N_o W)`.
    pub fn from_path_loss_db(path_loss_db: f64, params: &SystemParams) -> Result<Self> {
        if !path_loss_db.is_finite() {
            return Err(Error::Domain(format!("path loss must be finite, got {path_loss_db}")));
        }
        let gain = 10f64.powf(-path_loss_db / 10.0);
        let norm_gain = gain / params.noise_power();
        if !(gain > 0.0 && norm_gain > 0.0 && norm_gain.is_finite()) {
            return Err(Error::Setup(format!(
                "path loss {path_loss_db} dB yields a degenerate gain"
            )));
        }
        Ok(Self {
            path_loss_db,
            gain,
            norm_gain,
        })
    }

    pub fn path_loss_db(&self) -> f64 {
        self.path_loss_db
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Noise-normalized gain `L_n` in 1/W.
    pub fn norm_gain(&self) -> f64 {
        self.norm_gain
    }
}

pub fn users_from_losses(losses_db: &[f64], params: &SystemParams) -> Result<Vec<UserChannel>> {
    losses_db
        .iter()
        .map(|&db| UserChannel::from_path_loss_db(db, params))
        .collect()
}

/// Slot lengths and harvested energies of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    slot_lengths: Vec<f64>,
    harvests: Vec<f64>,
}

impl EnergyProfile {
    pub fn new(slot_lengths: Vec<f64>, harvests: Vec<f64>) -> Result<Self> {
        if slot_lengths.is_empty() {
            return Err(Error::Domain("profile needs at least one slot".into()));
        }
        if slot_lengths.len() != harvests.len() {
            return Err(Error::Shape(format!(
                "{} slot lengths but {} harvests",
                slot_lengths.len(),
                harvests.len()
            )));
        }
        if let Some((t, &len)) = slot_lengths
            .iter()
            .enumerate()
            .find(|(_, &l)| !(l > 0.0 && l.is_finite()))
        {
            return Err(Error::Domain(format!("slot {t} has non-positive length {len}")));
        }
        if let Some((t, &e)) = harvests
            .iter()
            .enumerate()
            .find(|(_, &e)| !(e >= 0.0 && e.is_finite()))
        {
            return Err(Error::Domain(format!("slot {t} has negative harvest {e}")));
        }
        if !harvests.iter().any(|&e| e > 0.0) {
            return Err(Error::Domain("at least one harvest must be positive".into()));
        }
        Ok(Self {
            slot_lengths,
            harvests,
        })
    }

    /// Equal-length slots.
    pub fn periodic(slot_length: f64, harvests: Vec<f64>) -> Result<Self> {
        Self::new(vec![slot_length; harvests.len()], harvests)
    }

    pub fn num_slots(&self) -> usize {
        self.slot_lengths.len()
    }

    pub fn slot_lengths(&self) -> &[f64] {
        &self.slot_lengths
    }

    pub fn harvests(&self) -> &[f64] {
        &self.harvests
    }

    pub fn frame_length(&self) -> f64 {
        self.slot_lengths.iter().sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.harvests.iter().sum()
    }

    /// Energy available by the end of each slot.
    pub fn cumulative_energy(&self) -> Vec<f64> {
        self.harvests
            .iter()
            .scan(0.0, |acc, &e| {
                *acc += e;
                Some(*acc)
            })
            .collect()
    }

    /// "Spend what you get" powers `E_t / T_t`.
    pub fn sg_powers(&self) -> Vec<f64> {
        self.harvests
            .iter()
            .zip(&self.slot_lengths)
            .map(|(e, t)| e / t)
            .collect()
    }
}

/// A complete problem instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: SystemParams,
    pub users: Vec<UserChannel>,
    pub profile: EnergyProfile,
}

impl Instance {
    pub fn new(params: SystemParams, users: Vec<UserChannel>, profile: EnergyProfile) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::Setup("instance needs at least one user".into()));
        }
        Ok(Self {
            params,
            users,
            profile,
        })
    }

    pub fn from_losses(params: SystemParams, losses_db: &[f64], profile: EnergyProfile) -> Result<Self> {
        Self::new(params, users_from_losses(losses_db, &params)?, profile)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_slots(&self) -> usize {
        self.profile.num_slots()
    }

    /// `R[n][t]`, the rate of user `n` at power `powers[t]`.
    pub fn rate_matrix(&self, powers: &[f64]) -> Vec<Vec<f64>> {
        rate_matrix(&self.users, powers, &self.params)
    }

    pub fn schedule(&self, powers: Vec<f64>, time_alloc: Vec<Vec<f64>>) -> Result<Schedule> {
        Schedule::new(powers, time_alloc, &self.users, &self.params)
    }
}

/// Power vector plus time matrix, with cached per-user bit totals.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    powers: Vec<f64>,
    time_alloc: Vec<Vec<f64>>,
    user_bits: Vec<f64>,
}

impl Schedule {
    pub fn new(
        powers: Vec<f64>,
        time_alloc: Vec<Vec<f64>>,
        users: &[UserChannel],
        params: &SystemParams,
    ) -> Result<Self> {
        let k = powers.len();
        if time_alloc.len() != users.len() {
            return Err(Error::Shape(format!(
                "time matrix has {} rows for {} users",
                time_alloc.len(),
                users.len()
            )));
        }
        if let Some((n, row)) = time_alloc.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(Error::Shape(format!(
                "time row {n} has {} entries, expected {k}",
                row.len()
            )));
        }
        let user_bits = user_bits(&time_alloc, &rate_matrix(users, &powers, params));
        Ok(Self {
            powers,
            time_alloc,
            user_bits,
        })
    }

    pub fn num_users(&self) -> usize {
        self.time_alloc.len()
    }

    pub fn num_slots(&self) -> usize {
        self.powers.len()
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn time_alloc(&self) -> &[Vec<f64>] {
        &self.time_alloc
    }

    /// Time shares of slot `t`, one entry per user.
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.time_alloc.iter().map(|row| row[t]).collect()
    }

    pub fn user_bits(&self) -> &[f64] {
        &self.user_bits
    }

    /// `sum_n log2(R_n)` from the cached bit totals.
    pub fn utility(&self) -> Result<f64> {
        log_utility(&self.user_bits)
    }

    /// Replaces the shares of slot `t` and refreshes the bit cache.
    pub(crate) fn set_column(&mut self, t: usize, shares: &[f64], rates: &[f64]) {
        for (n, row) in self.time_alloc.iter_mut().enumerate() {
            self.user_bits[n] += (shares[n] - row[t]) * rates[n];
            row[t] = shares[n];
        }
    }

    /// Recomputes the bit cache from scratch (removes incremental drift).
    pub(crate) fn refresh(&mut self, users: &[UserChannel], params: &SystemParams) {
        self.user_bits = user_bits(&self.time_alloc, &rate_matrix(users, &self.powers, params));
    }

    pub(crate) fn with_powers(
        &self,
        powers: Vec<f64>,
        users: &[UserChannel],
        params: &SystemParams,
    ) -> Schedule {
        let user_bits = user_bits(&self.time_alloc, &rate_matrix(users, &powers, params));
        Schedule {
            powers,
            time_alloc: self.time_alloc.clone(),
            user_bits,
        }
    }

    /// Largest absolute difference over all powers and time shares.
    pub fn max_abs_diff(&self, other: &Schedule) -> f64 {
        let dp = self
            .powers
            .iter()
            .zip(&other.powers)
            .map(|(a, b)| (a - b).abs());
        let dt = self
            .time_alloc
            .iter()
            .zip(&other.time_alloc)
            .flat_map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| (a - b).abs()));
        dp.chain(dt).fold(0.0, f64::max)
    }
}

/// Tuning knobs for the log-barrier power solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierOptions {
    pub initial_weight: f64,
    /// Factor by which the barrier weight shrinks each outer round.
    pub growth: f64,
    /// Newton-decrement and KKT-residual tolerance.
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    /// Stop once `2K * weight < gap_ratio * |U|`.
    pub gap_ratio: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            initial_weight: 1.0,
            growth: 10.0,
            inner_tol: 1e-9,
            max_inner_iters: 200,
            gap_ratio: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Minimum total time per user; `None` means `1e-6 * frame length`.
    pub epsilon_time: Option<f64>,
    pub utility_tol: f64,
    pub var_tol: f64,
    pub max_bcd_iters: usize,
    pub barrier: BarrierOptions,
    pub waterfill_tol: f64,
    /// Slot sweeps per BCD time step. Sweeping stops earlier once no share
    /// moves by more than `time_sweep_tol`; 1 gives a single sweep.
    pub max_time_sweeps: usize,
    pub time_sweep_tol: f64,
    /// Absolute tolerance on per-slot time sums.
    pub time_budget_tol: f64,
    /// Absolute tolerance (J) on cumulative energy constraints.
    pub energy_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon_time: None,
            utility_tol: 1e-9,
            var_tol: 1e-7,
            max_bcd_iters: 2000,
            barrier: BarrierOptions::default(),
            waterfill_tol: 1e-10,
            max_time_sweeps: 10_000,
            time_sweep_tol: 1e-10,
            time_budget_tol: 1e-8,
            energy_tol: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon_time", self.epsilon_time.unwrap_or(1.0)),
            ("utility_tol", self.utility_tol),
            ("var_tol", self.var_tol),
            ("waterfill_tol", self.waterfill_tol),
            ("time_sweep_tol", self.time_sweep_tol),
            ("time_budget_tol", self.time_budget_tol),
            ("energy_tol", self.energy_tol),
            ("barrier.initial_weight", self.barrier.initial_weight),
            ("barrier.inner_tol", self.barrier.inner_tol),
            ("barrier.gap_ratio", self.barrier.gap_ratio),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.barrier.growth > 1.0) {
            return Err(Error::Domain(format!(
                "barrier.growth must exceed 1, got {}",
                self.barrier.growth
            )));
        }
        if self.max_bcd_iters == 0 || self.barrier.max_inner_iters == 0 || self.max_time_sweeps == 0 {
            return Err(Error::Domain("iteration limits must be at least 1".into()));
        }
        Ok(())
    }

    pub fn epsilon_for(&self, profile: &EnergyProfile) -> f64 {
        self.epsilon_time
            .unwrap_or_else(|| 1e-6 * profile.frame_length())
    }
}

/// `W log2(1 + L p)` in bits/s.
pub fn slot_rate(norm_gain: f64, power: f64, params: &SystemParams) -> Result<f64> {
    if norm_gain < 0.0 || power < 0.0 || norm_gain.is_nan() || power.is_nan() {
        return Err(Error::Domain(format!(
            "slot_rate needs non-negative inputs, got L={norm_gain}, p={power}"
        )));
    }
    Ok(rate(norm_gain, power, params.bandwidth_hz))
}

#[inline]
pub(crate) fn rate(norm_gain: f64, power: f64, bandwidth: f64) -> f64 {
    bandwidth * (norm_gain * power).ln_1p() / LN_2
}

/// d rate / d power.
#[inline]
pub(crate) fn rate_slope(norm_gain: f64, power: f64, bandwidth: f64) -> f64 {
    bandwidth * norm_gain / ((1.0 + norm_gain * power) * LN_2)
}

/// d^2 rate / d power^2.
#[inline]
pub(crate) fn rate_curvature(norm_gain: f64, power: f64, bandwidth: f64) -> f64 {
    let d = 1.0 + norm_gain * power;
    -bandwidth * norm_gain * norm_gain / (d * d * LN_2)
}

pub fn rate_matrix(users: &[UserChannel], powers: &[f64], params: &SystemParams) -> Vec<Vec<f64>> {
    users
        .iter()
        .map(|u| {
            powers
                .iter()
                .map(|&p| rate(u.norm_gain, p, params.bandwidth_hz))
                .collect()
        })
        .collect()
}

pub(crate) fn user_bits(time_alloc: &[Vec<f64>], rates: &[Vec<f64>]) -> Vec<f64> {
    time_alloc
        .iter()
        .zip(rates)
        .map(|(tau, r)| tau.iter().zip(r).map(|(a, b)| a * b).sum())
        .collect()
}

pub(crate) fn log_utility(bits: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (user, &b) in bits.iter().enumerate() {
        if !(b > 0.0) {
            return Err(Error::Degenerate { user, bits: b });
        }
        total += b.log2();
    }
    Ok(total)
}

/// Proportional-fair utility `sum_n log2(R_n)`, recomputed from the schedule's
/// powers and time shares.
pub fn utility(sched: &Schedule, users: &[UserChannel], params: &SystemParams) -> Result<f64> {
    if sched.num_users() != users.len() {
        return Err(Error::Shape(format!(
            "schedule has {} users, channel list {}",
            sched.num_users(),
            users.len()
        )));
    }
    utility_of(sched.time_alloc(), sched.powers(), users, params)
}

/// Utility evaluated on raw arrays.
pub fn utility_of(
    time_alloc: &[Vec<f64>],
    powers: &[f64],
    users: &[UserChannel],
    params: &SystemParams,
) -> Result<f64> {
    log_utility(&user_bits(time_alloc, &rate_matrix(users, powers, params)))
}

/// Analytic `dU/dp_t` for fixed time shares.
pub fn power_gradient(
    time_alloc: &[Vec<f64>],
    powers: &[f64],
    users: &[UserChannel],
    params: &SystemParams,
) -> Result<Vec<f64>> {
    let w = params.bandwidth_hz;
    let bits = user_bits(time_alloc, &rate_matrix(users, powers, params));
    log_utility(&bits)?;
    let mut grad = vec![0.0; powers.len()];
    for ((tau, user), b) in time_alloc.iter().zip(users).zip(&bits) {
        for (t, g) in grad.iter_mut().enumerate() {
            *g += tau[t] * rate_slope(user.norm_gain, powers[t], w) / (b * LN_2);
        }
    }
    Ok(grad)
}

/// Analytic `dU/dtau_nt = R_nt / (R_n ln 2)` for fixed powers.
pub fn time_gradient(
    time_alloc: &[Vec<f64>],
    powers: &[f64],
    users: &[UserChannel],
    params: &SystemParams,
) -> Result<Vec<Vec<f64>>> {
    let rates = rate_matrix(users, powers, params);
    let bits = user_bits(time_alloc, &rates);
    log_utility(&bits)?;
    Ok(rates
        .iter()
        .zip(&bits)
        .map(|(r, b)| r.iter().map(|x| x / (b * LN_2)).collect())
        .collect())
}

/// One violated constraint of the joint problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeTime { user: usize, slot: usize, value: f64 },
    NegativePower { slot: usize, value: f64 },
    /// Shares of a slot do not add up to its length.
    TimeBudget { slot: usize, allocated: f64, length: f64 },
    /// A user's total time is below the minimum `epsilon`.
    MinimumTime { user: usize, total: f64, epsilon: f64 },
    /// More energy spent by the end of `slot` than harvested so far.
    EnergyCausality { slot: usize, spent: f64, harvested: f64 },
}

impl Violation {
    /// Signed slack of the violated constraint (negative means violated).
    pub fn slack(&self) -> f64 {
        match *self {
            Violation::NegativeTime { value, .. } | Violation::NegativePower { value, .. } => value,
            Violation::TimeBudget {
                allocated, length, ..
            } => -(allocated - length).abs(),
            Violation::MinimumTime { total, epsilon, .. } => total - epsilon,
            Violation::EnergyCausality {
                spent, harvested, ..
            } => harvested - spent,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    /// Users whose total time is within `10 * epsilon` of the minimum.
    pub near_minimum_time: Vec<usize>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn energy_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| matches!(v, Violation::EnergyCausality { .. }))
    }
}

/// Checks non-negativity, per-slot time budgets, minimum user time and
/// energy causality.
pub fn check_feasible(
    sched: &Schedule,
    profile: &EnergyProfile,
    opts: &SolverOptions,
) -> Result<FeasibilityReport> {
    let k = profile.num_slots();
    if sched.num_slots() != k {
        return Err(Error::Shape(format!(
            "schedule has {} slots, profile {k}",
            sched.num_slots()
        )));
    }
    let mut report = FeasibilityReport::default();
    let violations = &mut report.violations;

    for (n, row) in sched.time_alloc().iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            if v < 0.0 || v.is_nan() {
                violations.push(Violation::NegativeTime {
                    user: n,
                    slot: t,
                    value: v,
                });
            }
        }
    }
    for (t, &p) in sched.powers().iter().enumerate() {
        if p < 0.0 || p.is_nan() {
            violations.push(Violation::NegativePower { slot: t, value: p });
        }
    }
    for (t, &length) in profile.slot_lengths().iter().enumerate() {
        let allocated: f64 = sched.time_alloc().iter().map(|row| row[t]).sum();
        if !((allocated - length).abs() <= opts.time_budget_tol) {
            violations.push(Violation::TimeBudget {
                slot: t,
                allocated,
                length,
            });
        }
    }
    let epsilon = opts.epsilon_for(profile);
    for (n, row) in sched.time_alloc().iter().enumerate() {
        let total: f64 = row.iter().sum();
        if !(total >= epsilon) {
            violations.push(Violation::MinimumTime {
                user: n,
                total,
                epsilon,
            });
        } else if total < 10.0 * epsilon {
            report.near_minimum_time.push(n);
        }
    }
    let mut spent = 0.0;
    let mut harvested = 0.0;
    for t in 0..k {
        spent += sched.powers()[t] * profile.slot_lengths()[t];
        harvested += profile.harvests()[t];
        if !(spent <= harvested + opts.energy_tol) {
            violations.push(Violation::EnergyCausality {
                slot: t,
                spent,
                harvested,
            });
        }
    }
    Ok(report)
}
