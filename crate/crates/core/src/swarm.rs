//! Global-best particle swarm over a box-constrained vector space.
//!
//! Random numbers are drawn on the calling thread in a fixed order and the
//! objective is evaluated for the whole swarm before any best is updated, so
//! results are bit-identical for a given seed regardless of how evaluations
//! are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmParams {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit per coordinate as a fraction of the box width.
    pub max_velocity: f64,
    pub seed: u64,
}

impl Default for SwarmParams {
    fn default() -> Self {
        Self {
            particles: 40,
            iterations: 300,
            inertia: 0.729,
            cognitive: 1.494,
            social: 1.494,
            max_velocity: 0.2,
            seed: 7,
        }
    }
}

impl SwarmParams {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.iterations == 0 {
            return Err(Error::Config("particle and iteration counts must be at least 1".into()));
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
            ("max_velocity", self.max_velocity),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    /// Best cost after each iteration; non-increasing.
    pub trace: Vec<f64>,
    /// Final personal-best costs.
    pub personal_best_costs: Vec<f64>,
}

fn evaluate<F>(positions: &[Vec<f64>], objective: &F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let cost = |x: &Vec<f64>| {
        let c = objective(x);
        if c.is_nan() {
            f64::INFINITY
        } else {
            c
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        positions.par_iter().map(cost).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        positions.iter().map(cost).collect()
    }
}

/// Minimizes `objective` over the box `[lower, upper]`. `repair` is applied to
/// every position after it is clamped to the box.
pub fn minimize<F, R>(
    params: &SwarmParams,
    lower: &[f64],
    upper: &[f64],
    objective: F,
    repair: R,
) -> Result<SwarmResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Fn(&mut [f64]),
{
    params.validate()?;
    let dim = lower.len();
    if dim == 0 || upper.len() != dim {
        return Err(Error::Config("bounds must be non-empty and of equal length".into()));
    }
    if lower.iter().zip(upper).any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::Config("every lower bound must not exceed its upper bound".into()));
    }
    let vmax: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| params.max_velocity * (hi - lo))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut sample = |lo: f64, hi: f64| if lo < hi { rng.random_range(lo..hi) } else { lo };

    let mut positions: Vec<Vec<f64>> = Vec::with_capacity(params.particles);
    let mut velocities: Vec<Vec<f64>> = Vec::with_capacity(params.particles);
    for _ in 0..params.particles {
        let mut x: Vec<f64> = (0..dim).map(|d| sample(lower[d], upper[d])).collect();
        repair(&mut x);
        positions.push(x);
        velocities.push((0..dim).map(|d| sample(-vmax[d], vmax[d])).collect());
    }

    let mut costs = evaluate(&positions, &objective);
    let mut pbest = positions.clone();
    let mut pbest_cost = costs.clone();
    let mut g = argmin(&pbest_cost);
    let mut gbest = pbest[g].clone();
    let mut gbest_cost = pbest_cost[g];
    let mut trace = Vec::with_capacity(params.iterations);

    for _ in 0..params.iterations {
        for i in 0..params.particles {
            let (x, v) = (&mut positions[i], &mut velocities[i]);
            for d in 0..dim {
                let r1 = sample(0.0, 1.0);
                let r2 = sample(0.0, 1.0);
                let mut vel = params.inertia * v[d]
                    + params.cognitive * r1 * (pbest[i][d] - x[d])
                    + params.social * r2 * (gbest[d] - x[d]);
                vel = vel.clamp(-vmax[d], vmax[d]);
                let mut next = x[d] + vel;
                if next < lower[d] || next > upper[d] {
                    next = next.clamp(lower[d], upper[d]);
                    vel = 0.0;
                }
                v[d] = vel;
                x[d] = next;
            }
            repair(x);
        }
        costs = evaluate(&positions, &objective);
        for i in 0..params.particles {
            if costs[i] < pbest_cost[i] {
                pbest_cost[i] = costs[i];
                pbest[i].clone_from(&positions[i]);
            }
        }
        g = argmin(&pbest_cost);
        if pbest_cost[g] < gbest_cost {
            gbest_cost = pbest_cost[g];
            gbest.clone_from(&pbest[g]);
        }
        trace.push(gbest_cost);
    }

    Ok(SwarmResult {
        best: gbest,
        best_cost: gbest_cost,
        trace,
        personal_best_costs: pbest_cost,
    })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn sphere_16d_converges() {
        let params = SwarmParams {
            particles: 40,
            iterations: 200,
            seed: 1,
            ..Default::default()
        };
        let lower = vec![-100.0; 16];
        let upper = vec![100.0; 16];
        let res = minimize(&params, &lower, &upper, sphere, |_| {}).unwrap();
        assert!(res.best_cost < 1e-3, "best {}", res.best_cost);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(res.personal_best_costs.iter().all(|&c| res.best_cost <= c));
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let params = SwarmParams {
            particles: 10,
            iterations: 30,
            seed: 99,
            ..Default::default()
        };
        let lower = vec![-5.0; 4];
        let upper = vec![5.0; 4];
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + x[1..].iter().map(|v| v.abs()).sum::<f64>();
        let a = minimize(&params, &lower, &upper, f, |_| {}).unwrap();
        let b = minimize(&params, &lower, &upper, f, |_| {}).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn positions_stay_in_box() {
        let params = SwarmParams {
            particles: 8,
            iterations: 50,
            ..Default::default()
        };
        let lower = vec![2.0, -1.0];
        let upper = vec![3.0, 1.0];
        let res = minimize(
            &params,
            &lower,
            &upper,
            |x: &[f64]| {
                assert!((2.0..=3.0).contains(&x[0]) && (-1.0..=1.0).contains(&x[1]));
                x[0] + x[1]
            },
            |_| {},
        )
        .unwrap();
        assert!((res.best[0] - 2.0).abs() < 1e-6 && (res.best[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_params() {
        let bad = SwarmParams {
            particles: 0,
            ..Default::default()
        };
        assert!(minimize(&bad, &[0.0], &[1.0], |_| 0.0, |_| {}).is_err());
        let bad = SwarmParams {
            social: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(minimize(&SwarmParams::default(), &[1.0], &[0.0], |_| 0.0, |_| {}).is_err());
    }
}
