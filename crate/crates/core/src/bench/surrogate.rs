//! Training-curve surrogate over the twelve-parameter agent space.
//!
//! The asymptote `a(x)` is a quadratic bowl in normalized coordinates with
//! two three-parameter interaction terms and a bonus for ReLU activations.
//! It peaks at [`SurrogateCurveModel::optimum`], a point of the 3-level
//! lattice `{lower, middle, upper}^12`. The curve at step `t` is
//! `a(x) * (1 - exp(-r(x) * t / n_steps))` plus Gaussian noise seeded from
//! the trial seed.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{parse_config, StudyConfig};
use crate::protocol::{Decision, Outcome};
use crate::space::{ParamVector, SearchSpace};

pub const TABLE3_YAML: &str = include_str!("../../data/table3.yaml");

/// Network-architecture parameters of the agent space.
pub const NAS_PARAMS: [&str; 5] = ["activation_fn", "policy_layers", "policy_neurons", "value_layers", "value_neurons"];

/// The agent space and its study settings, parsed from the shipped YAML.
pub fn table3_config() -> (SearchSpace, StudyConfig) {
    parse_config(TABLE3_YAML).expect("shipped table3.yaml is valid")
}

pub fn table3_space() -> SearchSpace {
    static SPACE: OnceLock<SearchSpace> = OnceLock::new();
    SPACE.get_or_init(|| table3_config().0).clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

/// Activation encoded as a float: tanh below 0.5, ReLU from 0.5 up.
pub fn decode_activation(v: f64) -> Result<Activation, String> {
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("activation code {v} outside [0, 1]"));
    }
    Ok(if v < 0.5 { Activation::Tanh } else { Activation::Relu })
}

const NAMES: [&str; 12] = [
    "field_of_view",
    "gamma",
    "gae_lambda",
    "learning_rate",
    "number_of_epochs",
    "ent_coef",
    "clip_range",
    "activation_fn",
    "policy_layers",
    "policy_neurons",
    "value_layers",
    "value_neurons",
];

// normalized optimum, per NAMES
const TARGET: [f64; 12] = [1.0, 1.0, 0.5, 0.5, 0.0, 0.0, 0.5, 1.0, 1.0, 0.5, 0.5, 1.0];
const WEIGHTS: [f64; 12] = [0.8, 1.0, 0.6, 1.0, 0.5, 0.5, 0.6, 0.1, 0.3, 0.2, 0.2, 0.2];
const GAMMA: usize = 1;
const LR: usize = 3;
const EPOCHS: usize = 4;
const ACTIVATION: usize = 7;
const POLICY_LAYERS: usize = 8;
const POLICY_NEURONS: usize = 9;
const VALUE_NEURONS: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateCurveModel {
    pub noise_sigma: f64,
    pub n_steps: u64,
    /// Replaces `r(x)` when set.
    pub rate_override: Option<f64>,
}

impl Default for SurrogateCurveModel {
    fn default() -> Self {
        SurrogateCurveModel {
            noise_sigma: 2.0,
            n_steps: 100,
            rate_override: None,
        }
    }
}

fn normalize(params: &ParamVector) -> Result<[f64; 12], String> {
    let space = table3_space();
    let mut u = [0.0; 12];
    for (slot, name) in u.iter_mut().zip(NAMES) {
        let spec = space.get(name).expect("table3 names");
        let value = params.get(name).ok_or_else(|| format!("surrogate needs parameter `{name}`"))?;
        if !spec.contains(value) {
            return Err(format!("`{name}` = {value} outside [{}, {}]", spec.lower, spec.upper));
        }
        *slot = (value - spec.lower) / spec.range();
    }
    Ok(u)
}

fn asymptote_normalized(u: &[f64; 12]) -> f64 {
    let d: Vec<f64> = u.iter().zip(TARGET).map(|(x, t)| x - t).collect();
    let bowl: f64 = d.iter().zip(WEIGHTS).map(|(d, w)| w * d * d).sum();
    // agent-side coupling: discounting, step size and update count
    let agent = 0.8 * (d[GAMMA] + d[LR] - d[EPOCHS]).powi(2);
    // architecture coupling: depth against width of both networks
    let arch = 0.4 * (d[POLICY_LAYERS] - d[VALUE_NEURONS] + d[POLICY_NEURONS]).powi(2);
    let relu = if u[ACTIVATION] >= 0.5 { 15.0 } else { 0.0 };
    50.0 + 150.0 * (1.0 - bowl - agent - arch) + relu
}

impl SurrogateCurveModel {
    /// Final performance level `a(x)`.
    pub fn asymptote(&self, params: &ParamVector) -> Result<f64, String> {
        normalize(params).map(|u| asymptote_normalized(&u))
    }

    /// Learning speed `r(x)`, always positive.
    pub fn rate(&self, params: &ParamVector) -> Result<f64, String> {
        if let Some(r) = self.rate_override {
            return Ok(r);
        }
        let u = normalize(params)?;
        Ok(2.0 + 6.0 * u[LR] + 2.0 * (1.0 - u[EPOCHS]))
    }

    /// The global maximizer of `a(x)`.
    pub fn optimum() -> ParamVector {
        let space = table3_space();
        NAMES
            .iter()
            .zip(TARGET)
            .map(|(name, t)| {
                let spec = space.get(name).expect("table3 names");
                (name.to_string(), spec.decode(spec.lower + t * spec.range()))
            })
            .collect()
    }

    /// Brute-force maximum of `a(x)` over the 3-level lattice.
    pub fn lattice_argmax() -> (ParamVector, f64) {
        let space = table3_space();
        let levels: Vec<[f64; 3]> = NAMES
            .iter()
            .map(|name| {
                let spec = space.get(name).expect("table3 names");
                [spec.lower, spec.decode(spec.lower + 0.5 * spec.range()), spec.upper]
            })
            .collect();
        let mut best = (0usize, f64::NEG_INFINITY);
        for index in 0..3usize.pow(12) {
            let mut rest = index;
            let mut u = [0.0; 12];
            for (d, slot) in u.iter_mut().enumerate() {
                let spec = space.get(NAMES[d]).expect("table3 names");
                *slot = (levels[d][rest % 3] - spec.lower) / spec.range();
                rest /= 3;
            }
            let a = asymptote_normalized(&u);
            if a > best.1 {
                best = (index, a);
            }
        }
        let mut rest = best.0;
        let params = NAMES
            .iter()
            .enumerate()
            .map(|(d, name)| {
                let v = levels[d][rest % 3];
                rest /= 3;
                (name.to_string(), v)
            })
            .collect();
        (params, best.1)
    }

    /// Emits the noisy curve through `report`, stopping when told to.
    /// FINAL is the mean of the last ten reports.
    pub fn run(
        &self,
        params: &ParamVector,
        seed: u64,
        report_every: u64,
        report: &mut dyn FnMut(u64, f64) -> Decision,
    ) -> Outcome {
        let (a, r) = match (self.asymptote(params), self.rate(params)) {
            (Ok(a), Ok(r)) => (a, r),
            (Err(e), _) | (_, Err(e)) => return Outcome::failed(e),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n_steps.max(1);
        let mut values = Vec::with_capacity(n as usize);
        for t in 1..=n {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let value = a * (1.0 - (-r * t as f64 / n as f64).exp()) + self.noise_sigma * noise;
            values.push(value);
            let step = t * report_every.max(1);
            match report(step, value) {
                Decision::Continue => {}
                Decision::Stop => return Outcome::Pruned { step },
                Decision::Abort => return Outcome::failed("aborted"),
            }
        }
        let tail = &values[values.len().saturating_sub(10)..];
        Outcome::Completed {
            objective: tail.iter().sum::<f64>() / tail.len() as f64,
            extra_info: None,
        }
    }
}
