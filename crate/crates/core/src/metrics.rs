//! SG+TDMA baseline and evaluation metrics.

use crate::error::{Error, Result};
use crate::model::{Instance, Schedule};

/// "Spend what you get" powers with round-robin slot ownership: slot `t`
/// belongs entirely to user `t mod N`.
pub fn sg_tdma_schedule(instance: &Instance) -> Result<Schedule> {
    let n = instance.num_users();
    let k = instance.num_slots();
    if k < n {
        return Err(Error::StarvedUser {
            user: k,
            slots: k,
            users: n,
        });
    }
    let lengths = instance.profile.slot_lengths();
    let mut tau = vec![vec![0.0; k]; n];
    for (t, &len) in lengths.iter().enumerate() {
        tau[t % n][t] = len;
    }
    instance.schedule(instance.profile.sg_powers(), tau)
}

/// Jain's fairness index `(sum x)^2 / (N sum x^2)`.
pub fn jain_index(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Domain("Jain index of an empty vector".into()));
    }
    if let Some(v) = x.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("Jain index needs positive entries, got {v}")));
    }
    let sum: f64 = x.iter().sum();
    let sq: f64 = x.iter().map(|v| v * v).sum();
    Ok((sum * sum / (x.len() as f64 * sq)).min(1.0))
}

/// Arithmetic mean of the users' path losses in dB.
pub fn mean_path_loss_db(instance: &Instance) -> f64 {
    let users = &instance.users;
    users.iter().map(|u| u.path_loss_db()).sum::<f64>() / users.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub candidate_utility: f64,
    pub baseline_utility: f64,
    pub utility_improvement_pct: f64,
    /// `None` where the baseline gives the user no bits.
    pub per_user_throughput_improvement_pct: Vec<Option<f64>>,
    /// Jain index of the candidate's per-user bits.
    pub jain_index: f64,
    pub baseline_jain_index: f64,
    pub mean_path_loss_db: f64,
}

/// Compares `candidate` against `baseline` on the same instance.
pub fn improvement_metrics(
    candidate: &Schedule,
    baseline: &Schedule,
    instance: &Instance,
) -> Result<MetricsReport> {
    let cand = crate::model::utility(candidate, &instance.users, &instance.params)?;
    let base = crate::model::utility(baseline, &instance.users, &instance.params)?;
    let per_user = candidate
        .user_bits()
        .iter()
        .zip(baseline.user_bits())
        .map(|(&c, &b)| (b > 0.0).then(|| 100.0 * (c - b) / b))
        .collect();
    Ok(MetricsReport {
        candidate_utility: cand,
        baseline_utility: base,
        utility_improvement_pct: utility_improvement_pct(cand, base),
        per_user_throughput_improvement_pct: per_user,
        jain_index: jain_index(candidate.user_bits())?,
        baseline_jain_index: jain_index(baseline.user_bits())?,
        mean_path_loss_db: mean_path_loss_db(instance),
    })
}

/// `100 (U_c - U_b) / |U_b|`.
pub fn utility_improvement_pct(candidate: f64, baseline: f64) -> f64 {
    100.0 * (candidate - baseline) / baseline.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_feasible, EnergyProfile, SolverOptions, SystemParams};

    fn s1_tilde() -> Instance {
        Instance::from_losses(
            SystemParams::default(),
            &[25.0, 28.0, 31.0, 34.0, 37.0],
            EnergyProfile::periodic(10.0, vec![20., 100., 1., 1., 1., 70., 100., 1., 10., 40.]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn sg_tdma_layout() {
        let inst = s1_tilde();
        let s = sg_tdma_schedule(&inst).unwrap();
        let expect = [2.0, 10.0, 0.1, 0.1, 0.1, 7.0, 10.0, 0.1, 1.0, 4.0];
        for (p, e) in s.powers().iter().zip(expect) {
            assert!((p - e).abs() < 1e-12);
        }
        assert_eq!(s.time_alloc()[0][0], 10.0);
        assert_eq!(s.time_alloc()[0][5], 10.0);
        assert_eq!(s.time_alloc()[4][4], 10.0);
        assert_eq!(s.time_alloc()[4][9], 10.0);
        assert_eq!(s.time_alloc()[0].iter().filter(|&&v| v > 0.0).count(), 2);
        assert!(check_feasible(&s, &inst.profile, &SolverOptions::default())
            .unwrap()
            .is_feasible());
    }

    #[test]
    fn round_robin_when_k_not_multiple_of_n() {
        let inst = Instance::from_losses(
            SystemParams::default(),
            &[25.0, 28.0, 31.0],
            EnergyProfile::periodic(1.0, vec![1.0; 5]).unwrap(),
        )
        .unwrap();
        let s = sg_tdma_schedule(&inst).unwrap();
        let counts: Vec<usize> = s
            .time_alloc()
            .iter()
            .map(|r| r.iter().filter(|&&v| v > 0.0).count())
            .collect();
        assert_eq!(counts, vec![2, 2, 1]);
    }

    #[test]
    fn too_few_slots() {
        let inst = Instance::from_losses(
            SystemParams::default(),
            &[25.0, 28.0, 31.0],
            EnergyProfile::periodic(1.0, vec![1.0; 2]).unwrap(),
        )
        .unwrap();
        assert!(matches!(sg_tdma_schedule(&inst), Err(Error::StarvedUser { user: 2, .. })));
    }

    #[test]
    fn jain_examples() {
        assert!((jain_index(&[3.0; 4]).unwrap() - 1.0).abs() < 1e-15);
        let d = 1e-12;
        assert!((jain_index(&[1.0, d, d, d]).unwrap() - 0.25).abs() < 1e-9);
        assert!(jain_index(&[]).is_err());
        assert!(jain_index(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn self_comparison_is_zero() {
        let inst = s1_tilde();
        let s = sg_tdma_schedule(&inst).unwrap();
        let m = improvement_metrics(&s, &s, &inst).unwrap();
        assert_eq!(m.utility_improvement_pct, 0.0);
        assert!(m.per_user_throughput_improvement_pct.iter().all(|v| *v == Some(0.0)));
        assert_eq!(m.mean_path_loss_db, 31.0);
    }

    #[test]
    fn baseline_improvement_reference() {
        // 100 * (75.7325 - U0) / U0 where U0 is the SG+TDMA utility.
        let inst = s1_tilde();
        let u0 = sg_tdma_schedule(&inst).unwrap().utility().unwrap();
        assert!((utility_improvement_pct(75.7325, u0) - 9.6133).abs() < 0.01);
    }

    #[test]
    fn negative_baseline_keeps_sign() {
        assert!(utility_improvement_pct(-1.0, -2.0) > 0.0);
        assert!(utility_improvement_pct(-3.0, -2.0) < 0.0);
    }
}
