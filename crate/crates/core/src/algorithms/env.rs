use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimators::Observations;
use crate::geometry::SimplexWeights;
use crate::instances::ProblemInstance;

/// Which response a batch of observations is read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Value,
    Constraint(usize),
}

/// Observations from `tau` pulls of a fixed allocation, split by channel.
#[derive(Clone, Debug)]
pub struct Batch {
    value: Observations,
    constraints: Vec<Observations>,
}

impl Batch {
    pub fn channel(&self, c: Channel) -> &Observations {
        match c {
            Channel::Value => &self.value,
            Channel::Constraint(i) => &self.constraints[i],
        }
    }

    pub fn len(&self) -> usize {
        self.value.total()
    }

    pub fn is_empty(&self) -> bool {
        self.value.total() == 0
    }
}

/// Simulated interaction with a fixed instance. Every pull of arm `x` returns
/// `θ*ᵀx + σw` and `μ_iᵀx + σw_i` with fresh standard normal `w`, `w_i`.
#[derive(Clone, Debug)]
pub struct Environment {
    instance: ProblemInstance,
    seed: u64,
    rng: ChaCha8Rng,
    pulls: u64,
    value_means: Vec<f64>,
    constraint_means: Vec<Vec<f64>>,
}

impl Environment {
    pub fn new(instance: ProblemInstance, seed: u64) -> Self {
        let value_means = instance.x().iter().map(|x| instance.theta_star().dot(x)).collect();
        let constraint_means =
            instance.mu_star().iter().map(|mu| instance.x().iter().map(|x| mu.dot(x)).collect()).collect();
        Self { instance, seed, rng: ChaCha8Rng::seed_from_u64(seed), pulls: 0, value_means, constraint_means }
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    /// One pull of arm `x`: the value response and one response per constraint.
    pub fn pull(&mut self, x: usize) -> (f64, Vec<f64>) {
        let sigma = self.instance.noise_sigma();
        self.pulls += 1;
        let r = self.value_means[x] + sigma * self.normal();
        let s = (0..self.constraint_means.len()).map(|i| self.constraint_means[i][x] + sigma * self.normal()).collect();
        (r, s)
    }

    /// `tau` i.i.d. pulls with arms drawn from `lambda`.
    pub fn sample(&mut self, lambda: &SimplexWeights, tau: u64) -> Result<Batch> {
        let n = self.instance.x().len();
        if lambda.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: lambda.len() });
        }
        let picker = WeightedIndex::new(lambda.as_slice()).map_err(|e| Error::InvalidWeights(e.to_string()))?;
        let m = self.constraint_means.len();
        let sigma = self.instance.noise_sigma();
        let mut value = Observations::new(n);
        let mut constraints = vec![Observations::new(n); m];
        for _ in 0..tau {
            let x = picker.sample(&mut self.rng);
            value.push(x, self.value_means[x] + sigma * self.normal());
            for (i, obs) in constraints.iter_mut().enumerate() {
                obs.push(x, self.constraint_means[i][x] + sigma * self.normal());
            }
        }
        self.pulls += tau;
        Ok(Batch { value, constraints })
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::gen_mab_hard_instance;

    #[test]
    fn sampling_is_seeded_and_counted() {
        let inst = gen_mab_hard_instance(5, 0.1, 0.05).unwrap();
        let lam = SimplexWeights::uniform(5);
        let mut a = Environment::new(inst.clone(), 3);
        let mut b = Environment::new(inst, 3);
        let (ba, bb) = (a.sample(&lam, 100).unwrap(), b.sample(&lam, 100).unwrap());
        assert_eq!(ba.channel(Channel::Value), bb.channel(Channel::Value));
        assert_eq!(a.pulls(), 100);
        assert_eq!(ba.channel(Channel::Constraint(0)).total(), 100);
    }

    #[test]
    fn zero_weight_arms_are_never_pulled() {
        let inst = gen_mab_hard_instance(4, 0.1, 0.05).unwrap();
        let mut env = Environment::new(inst, 1);
        let batch = env.sample(&SimplexWeights::vertex(4, 2), 50).unwrap();
        assert_eq!(batch.channel(Channel::Value).arm(2).len(), 50);
    }

    #[test]
    fn sample_means_track_truth() {
        let inst = gen_mab_hard_instance(3, 0.1, 0.05).unwrap();
        let mut env = Environment::new(inst, 9);
        let batch = env.sample(&SimplexWeights::vertex(3, 0), 20_000).unwrap();
        let v = batch.channel(Channel::Value).arm(0);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 1.0).abs() < 0.05);
    }
}
