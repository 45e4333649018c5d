#![allow(dead_code)]

use eh_sched::scenario::builtin;
use eh_sched::{EnergyProfile, Instance, SystemParams};
use rand::Rng;

pub fn named(name: &str) -> Instance {
    builtin(name).expect("built-in scenario").instance().unwrap()
}

/// Strictly positive harvests, so every slot has usable energy.
pub fn random_instance<R: Rng>(rng: &mut R, max_users: usize, max_slots: usize) -> Instance {
    let n = rng.gen_range(1..=max_users);
    let k = rng.gen_range(1..=max_slots);
    let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(10.0..40.0)).collect();
    let lengths: Vec<f64> = (0..k).map(|_| rng.gen_range(1.0..20.0)).collect();
    let harvests: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..100.0)).collect();
    Instance::from_losses(
        SystemParams::default(),
        &losses,
        EnergyProfile::new(lengths, harvests).unwrap(),
    )
    .unwrap()
}

/// Every share strictly positive, every slot filled.
pub fn random_time_alloc<R: Rng>(rng: &mut R, instance: &Instance) -> Vec<Vec<f64>> {
    let n = instance.num_users();
    let mut tau = vec![vec![0.0; instance.num_slots()]; n];
    for (t, &len) in instance.profile.slot_lengths().iter().enumerate() {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        for (row, wi) in tau.iter_mut().zip(&w) {
            row[t] = len * wi / s;
        }
    }
    tau
}

/// Strictly inside the energy constraints and away from zero.
pub fn random_interior_powers<R: Rng>(rng: &mut R, instance: &Instance) -> Vec<f64> {
    instance
        .profile
        .sg_powers()
        .iter()
        .map(|p| p * rng.gen_range(0.1..0.9))
        .collect()
}
