//! Standard test functions, all minimized.

use std::f64::consts::PI;

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

/// Branin-Hoo on `[-5, 10] x [0, 15]`; global minimum 0.397887.
pub fn branin(x: &[f64]) -> Result<f64, String> {
    let [x1, x2] = x else {
        return Err(format!("branin is two-dimensional, got {} coordinates", x.len()));
    };
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    Ok((x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    Sphere,
    Rastrigin,
    Branin,
}

impl TestFunction {
    pub const ALL: [TestFunction; 3] = [TestFunction::Sphere, TestFunction::Rastrigin, TestFunction::Branin];

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Sphere => "sphere",
            TestFunction::Rastrigin => "rastrigin",
            TestFunction::Branin => "branin",
        }
    }

    pub fn from_name(name: &str) -> Option<TestFunction> {
        TestFunction::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Default dimension and per-coordinate bounds.
    pub fn bounds(self) -> Vec<(f64, f64)> {
        match self {
            TestFunction::Sphere | TestFunction::Rastrigin => vec![(-5.12, 5.12); 5],
            TestFunction::Branin => vec![(-5.0, 10.0), (0.0, 15.0)],
        }
    }

    pub fn eval(self, x: &[f64]) -> Result<f64, String> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err("non-finite input".into());
        }
        match self {
            TestFunction::Sphere => Ok(sphere(x)),
            TestFunction::Rastrigin => Ok(rastrigin(x)),
            TestFunction::Branin => branin(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_optima() {
        assert_eq!(sphere(&[0.0; 5]), 0.0);
        assert_eq!(rastrigin(&[0.0; 5]), 0.0);
        for x in [[-PI, 12.275], [PI, 2.275], [9.42478, 2.475]] {
            assert!((branin(&x).unwrap() - 0.397887).abs() < 1e-6);
        }
        assert!(branin(&[1.0]).is_err());
        assert!(branin(&[1.0, 2.0, 3.0]).is_err());
        assert_eq!(sphere(&[1.0, -2.0]), 5.0);
    }
}
