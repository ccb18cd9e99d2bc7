//! Tree-structured Parzen estimator.
//!
//! Completed trials are ranked by objective and split into a "good" and a
//! "bad" group. A Parzen density is fitted to each group (Gaussian kernels
//! truncated to the parameter bounds), candidates are drawn from the good
//! density, and the candidate with the largest good/bad density ratio wins.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{Direction, TpeConfig};
use crate::sampler::random::sample_random;
use crate::space::{ParamVector, ParameterSpec, SearchSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedTrial {
    pub trial_id: u64,
    pub params: ParamVector,
    /// Raw objective as reported; direction is applied by the consumer.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrunedTrial {
    pub trial_id: u64,
    pub params: ParamVector,
    pub last_report: f64,
}

/// What a sampler has observed so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialHistory {
    pub completed: Vec<CompletedTrial>,
    pub pruned: Vec<PrunedTrial>,
    pub running: Vec<ParamVector>,
}

/// Scale applied to the Scott-style bandwidth rule. Without it the kernels
/// of a few dozen observations span the whole range and the density ratio
/// carries almost no information.
pub const BANDWIDTH_MAGNITUDE: f64 = 0.1;

/// Smallest kernel width, as a fraction of the parameter range.
const MIN_BANDWIDTH_FRACTION: f64 = 1e-3;

/// Suggests the next parameter vector. Falls back to uniform random
/// sampling until `n_startup_trials` trials have completed; with the same
/// generator state the two paths then produce identical suggestions.
pub fn tpe_suggest<R: Rng + ?Sized>(
    space: &SearchSpace,
    history: &TrialHistory,
    cfg: &TpeConfig,
    direction: Direction,
    rng: &mut R,
) -> ParamVector {
    if history.completed.len() < cfg.n_startup_trials {
        return sample_random(space, rng);
    }
    let dims: Vec<&ParameterSpec> = space.searchable().collect();
    if dims.is_empty() {
        return space.assemble(&[]);
    }

    let (good, bad) = split(space, &history.completed, cfg, direction);
    let below = ParzenEstimator::fit(&good, &dims, cfg.multivariate);
    let above = (!bad.is_empty()).then(|| ParzenEstimator::fit(&bad, &dims, cfg.multivariate));

    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.n_ei_candidates {
        let candidate: Vec<f64> = below
            .sample(rng)
            .into_iter()
            .zip(&dims)
            .map(|(x, spec)| spec.decode(x))
            .collect();
        // with no bad observations the bad density is uniform, a constant
        let ratio = below.log_pdf(&candidate) - above.as_ref().map_or(0.0, |g| g.log_pdf(&candidate));
        if best.as_ref().map_or(true, |(b, _)| ratio > *b) {
            best = Some((ratio, candidate));
        }
    }
    let (_, coords) = best.expect("at least one candidate");
    space.assemble(&coords)
}

/// Good group size: `min(ceil(gamma_fraction * n), gamma_cap)`, at least one.
pub fn n_good(n: usize, cfg: &TpeConfig) -> usize {
    let n_good = (cfg.gamma_fraction * n as f64).ceil() as usize;
    n_good.min(cfg.gamma_cap).clamp(1, n.max(1))
}

/// Ranks by objective (ties by earlier trial id) and returns the searchable
/// coordinates of the good and bad groups.
fn split(
    space: &SearchSpace,
    completed: &[CompletedTrial],
    cfg: &TpeConfig,
    direction: Direction,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut ranked: Vec<&CompletedTrial> = completed.iter().collect();
    ranked.sort_by(|a, b| {
        direction
            .score(b.objective)
            .total_cmp(&direction.score(a.objective))
            .then(a.trial_id.cmp(&b.trial_id))
    });
    let n_good = n_good(ranked.len(), cfg);
    let coords = |t: &&CompletedTrial| space.coordinates(&t.params);
    let good = ranked[..n_good].iter().map(coords).collect();
    let bad = ranked[n_good..].iter().map(coords).collect();
    (good, bad)
}

#[derive(Debug, Clone)]
struct ParzenEstimator {
    centers: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Per dimension, per kernel: log of the kernel's mass inside the bounds.
    log_mass: Vec<Vec<f64>>,
    multivariate: bool,
}

impl ParzenEstimator {
    fn fit(points: &[Vec<f64>], dims: &[&ParameterSpec], multivariate: bool) -> Self {
        let n = points.len() as f64;
        let d = dims.len() as f64;
        let shrink = n.powf(-1.0 / (d + 4.0));
        let bandwidths: Vec<f64> = dims
            .iter()
            .map(|spec| {
                let range = spec.range();
                (BANDWIDTH_MAGNITUDE * range * shrink).max(MIN_BANDWIDTH_FRACTION * range)
            })
            .collect();
        let lower: Vec<f64> = dims.iter().map(|s| s.lower).collect();
        let upper: Vec<f64> = dims.iter().map(|s| s.upper).collect();
        let log_mass = (0..dims.len())
            .map(|k| {
                points
                    .iter()
                    .map(|p| {
                        if bandwidths[k] == 0.0 {
                            0.0
                        } else {
                            log_normal_mass(p[k], bandwidths[k], lower[k], upper[k])
                        }
                    })
                    .collect()
            })
            .collect();
        ParzenEstimator {
            centers: points.to_vec(),
            bandwidths,
            lower,
            upper,
            log_mass,
            multivariate,
        }
    }

    fn kernel_log_pdf(&self, i: usize, k: usize, x: f64) -> f64 {
        let sigma = self.bandwidths[k];
        if sigma == 0.0 {
            // zero-width range: every kernel sits on the single legal value
            return 0.0;
        }
        let z = (x - self.centers[i][k]) / sigma;
        -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln() - self.log_mass[k][i]
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        let n = self.centers.len();
        let ln_n = (n as f64).ln();
        if self.multivariate {
            let terms: Vec<f64> = (0..n)
                .map(|i| (0..x.len()).map(|k| self.kernel_log_pdf(i, k, x[k])).sum())
                .collect();
            log_sum_exp(&terms) - ln_n
        } else {
            (0..x.len())
                .map(|k| {
                    let terms: Vec<f64> = (0..n).map(|i| self.kernel_log_pdf(i, k, x[k])).collect();
                    log_sum_exp(&terms) - ln_n
                })
                .sum()
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.centers.len();
        let dims = self.bandwidths.len();
        if self.multivariate {
            let i = rng.random_range(0..n);
            (0..dims).map(|k| self.draw(i, k, rng)).collect()
        } else {
            (0..dims)
                .map(|k| {
                    let i = rng.random_range(0..n);
                    self.draw(i, k, rng)
                })
                .collect()
        }
    }

    fn draw<R: Rng + ?Sized>(&self, i: usize, k: usize, rng: &mut R) -> f64 {
        let mu = self.centers[i][k];
        let sigma = self.bandwidths[k];
        if sigma == 0.0 {
            return mu;
        }
        // Centers lie inside the bounds and sigma is at most the range, so
        // at least a third of the proposals are accepted.
        for _ in 0..64 {
            let z: f64 = rng.sample(StandardNormal);
            let x = mu + sigma * z;
            if x >= self.lower[k] && x <= self.upper[k] {
                return x;
            }
        }
        mu
    }
}

/// log(Phi(b) - Phi(a)) for a normal with mean `mu`, scale `sigma`, over [lo, hi].
fn log_normal_mass(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mu) / (sigma * std::f64::consts::SQRT_2);
    let b = (hi - mu) / (sigma * std::f64::consts::SQRT_2);
    let mass = 0.5 * (libm::erf(b) - libm::erf(a));
    if mass > 0.0 {
        mass.ln()
    } else {
        // both bounds far in one tail; use the complementary form
        let tail = if a > 0.0 {
            0.5 * (libm::erfc(a) - libm::erfc(b))
        } else {
            0.5 * (libm::erfc(-b) - libm::erfc(-a))
        };
        tail.max(f64::MIN_POSITIVE).ln()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn unit_space() -> SearchSpace {
        SearchSpace::new(vec![ParameterSpec::float("x", 0.0, 1.0)]).unwrap()
    }

    fn history_from(points: &[(f64, f64)], space: &SearchSpace) -> TrialHistory {
        TrialHistory {
            completed: points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| CompletedTrial {
                    trial_id: i as u64,
                    params: space.assemble(&[x]),
                    objective: y,
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn good_set_size_rule() {
        let cfg = TpeConfig::default();
        assert_eq!(n_good(50, &cfg), 13);
        assert_eq!(n_good(60, &cfg), 15);
        assert_eq!(n_good(100, &cfg), 25);
        assert_eq!(n_good(400, &cfg), 25);
        assert_eq!(n_good(1, &cfg), 1);
    }

    #[test]
    fn startup_matches_random_sampling() {
        let space = unit_space();
        let points: Vec<(f64, f64)> = (0..49).map(|i| (i as f64 / 49.0, i as f64)).collect();
        let history = history_from(&points, &space);
        let cfg = TpeConfig::default();
        for seed in 0..20 {
            let a = tpe_suggest(&space, &history, &cfg, Direction::Maximize, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = sample_random(&space, &mut ChaCha8Rng::seed_from_u64(seed));
            assert!(a.bit_eq(&b));
        }
    }

    #[test]
    fn empty_history_and_empty_space() {
        let space = unit_space();
        let cfg = TpeConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = tpe_suggest(&space, &TrialHistory::default(), &cfg, Direction::Minimize, &mut rng);
        space.check(&v).unwrap();

        let pinned = SearchSpace::new(vec![ParameterSpec::float("x", 0.0, 1.0).fixed_at(0.3)]).unwrap();
        let completed = (0..60)
            .map(|i| CompletedTrial { trial_id: i, params: pinned.assemble(&[]), objective: i as f64 })
            .collect();
        let history = TrialHistory { completed, ..Default::default() };
        let v = tpe_suggest(&pinned, &history, &cfg, Direction::Maximize, &mut rng);
        assert_eq!(v.get("x"), Some(0.3));
    }

    #[test]
    fn concentrates_on_the_good_region() {
        // 60 uniformly drawn observations scoring 1 inside [0.4, 0.5], 0 elsewhere
        let space = unit_space();
        let mut draw = ChaCha8Rng::seed_from_u64(2024);
        let points: Vec<(f64, f64)> = (0..60)
            .map(|_| {
                let x: f64 = draw.random();
                (x, if (0.4..=0.5).contains(&x) { 1.0 } else { 0.0 })
            })
            .collect();
        assert!(points.iter().filter(|p| p.1 == 1.0).count() >= 3);
        let history = history_from(&points, &space);
        let cfg = TpeConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inside = (0..200)
            .filter(|_| {
                let x = tpe_suggest(&space, &history, &cfg, Direction::Maximize, &mut rng).get("x").unwrap();
                (0.35..=0.55).contains(&x)
            })
            .count();
        eprintln!("{inside}/200 suggestions in the good region");
        assert!(inside as f64 / 200.0 >= 0.7, "only {inside}/200 in the good region");
    }

    #[test]
    fn degenerate_objectives_still_suggest() {
        let space = SearchSpace::new(vec![
            ParameterSpec::float("x", -1.0, 1.0),
            ParameterSpec::integer("n", 1, 4),
        ])
        .unwrap();
        let completed = (0..60)
            .map(|i| CompletedTrial {
                trial_id: i,
                params: space.assemble(&[(i as f64 / 30.0) - 1.0, (i % 4 + 1) as f64]),
                objective: 3.0,
            })
            .collect();
        let history = TrialHistory { completed, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let v = tpe_suggest(&space, &history, &TpeConfig::default(), Direction::Maximize, &mut rng);
            space.check(&v).unwrap();
        }
    }

    #[test]
    fn truncated_kernels_integrate_to_one() {
        // midpoint-rule quadrature over the bounded support
        let spec = ParameterSpec::float("x", 0.0, 2.0);
        let dims = [&spec];
        for multivariate in [true, false] {
            let est = ParzenEstimator::fit(&[vec![0.1], vec![1.9], vec![1.0]], &dims, multivariate);
            let steps = 20_000;
            let h = 2.0 / steps as f64;
            let total: f64 = (0..steps)
                .map(|i| est.log_pdf(&[(i as f64 + 0.5) * h]).exp() * h)
                .sum();
            assert!((total - 1.0).abs() < 1e-6, "{total}");
        }
    }

    #[test]
    fn normal_mass_far_tail_is_finite() {
        let m = log_normal_mass(0.0, 1.0, 40.0, 41.0);
        assert!(m.is_finite());
        assert!((log_normal_mass(0.0, 1.0, -50.0, 50.0)).abs() < 1e-12);
    }
}
