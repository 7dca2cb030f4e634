//! Synthetic regression data with known informative and correlated features.
//!
//! There are 250 features named `x1..x250`. `x1..x205` are iid Uniform[0, 1];
//! `x206..x250` are noisy copies of `x5`, `x_{205+j} = clamp(x5 + eta_j, 0, 1)`
//! with `eta_j ~ N(0, correlated_noise_sd^2)`. The response is
//!
//! ```text
//! y = 0.8 sin(x1 x2) + 2 (x3 - 0.5)^2 + x4 + 0.7 x5
//!     + sum_{j=1..200} 0.9^(j/3) x_{j+5}
//!     + sum_{j=1..45}  0.9^j     z_j
//!     + eps,           eps ~ N(0, noise_sd^2)
//! ```
//!
//! where `z_j` is `x5` itself ([`CorrelatedTerm::Literal`], the default) or
//! the correlated column `x_{205+j}` ([`CorrelatedTerm::Columns`]).
//!
//! Draw order: rows are generated one at a time from
//! `Stream::derived(seed, SIMULATE)`; each row takes 205 uniforms for
//! `x1..x205`, then 45 normals for `eta_1..eta_45`, then one normal for `eps`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Target};
use crate::error::{Error, Result};
use crate::rng::{tags, Stream};

pub const N_FEATURES: usize = 250;
pub const N_UNIFORM: usize = 205;
pub const N_CORRELATED: usize = 45;
pub const TARGET_NAME: &str = "y";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelatedTerm {
    /// The geometric sum multiplies `x5`.
    #[default]
    Literal,
    /// The geometric sum multiplies the correlated columns.
    Columns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub seed: u64,
    pub noise_sd: f64,
    pub correlated_noise_sd: f64,
    #[serde(default)]
    pub correlated_term: CorrelatedTerm,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            seed: 0,
            noise_sd: 1.0,
            correlated_noise_sd: 0.2,
            correlated_term: CorrelatedTerm::Literal,
        }
    }
}

impl SimSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("simulation needs n >= 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.correlated_noise_sd >= 0.0) {
            return Err(Error::Config("standard deviations must be non-negative".into()));
        }
        Ok(())
    }
}

/// Ground-truth feature sets as 0-based column indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub important: Vec<usize>,
    pub correlated: Vec<usize>,
}

impl Default for GroundTruth {
    fn default() -> Self {
        Self {
            important: important_set(),
            correlated: correlated_set(),
        }
    }
}

impl GroundTruth {
    /// Write the JSON sidecar listing both sets by index and by name.
    pub fn write_sidecar(&self, path: &Path, spec: &SimSpec) -> Result<()> {
        let names = |idx: &[usize]| idx.iter().map(|&i| feature_name(i)).collect::<Vec<_>>();
        let doc = serde_json::json!({
            "spec": spec,
            "index_base": 0,
            "important": self.important,
            "correlated": self.correlated,
            "important_names": names(&self.important),
            "correlated_names": names(&self.correlated),
        });
        let text = serde_json::to_string_pretty(&doc)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Name of 0-based column `i`: `x{i+1}`.
pub fn feature_name(i: usize) -> String {
    format!("x{}", i + 1)
}

/// Coefficient of `x_{j+5}` for `j = 1..=200`.
pub fn decay_coefficient(j: usize) -> f64 {
    0.9f64.powf(j as f64 / 3.0)
}

/// Coefficient of the `j`-th correlated term, `j = 1..=45`.
pub fn correlated_coefficient(j: usize) -> f64 {
    0.9f64.powi(j as i32)
}

/// `x1..x5` plus every `x_i`, `6 <= i <= 205`, whose coefficient
/// `0.9^((i-5)/3)` exceeds 0.01, as 0-based indices.
pub fn important_set() -> Vec<usize> {
    (1..=N_UNIFORM)
        .filter(|&i| i <= 5 || decay_coefficient(i - 5) > 0.01)
        .map(|i| i - 1)
        .collect()
}

/// `x206..x250` as 0-based indices.
pub fn correlated_set() -> Vec<usize> {
    (N_UNIFORM..N_FEATURES).collect()
}

/// Noise-free response for one row of 250 feature values.
pub fn mean_response(x: &[f64], term: CorrelatedTerm) -> f64 {
    let mut y = 0.8 * (x[0] * x[1]).sin() + 2.0 * (x[2] - 0.5).powi(2) + x[3] + 0.7 * x[4];
    for j in 1..=200 {
        y += decay_coefficient(j) * x[j + 4];
    }
    for j in 1..=N_CORRELATED {
        let z = match term {
            CorrelatedTerm::Literal => x[4],
            CorrelatedTerm::Columns => x[N_UNIFORM + j - 1],
        };
        y += correlated_coefficient(j) * z;
    }
    y
}

pub fn simulate(spec: &SimSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = Stream::derived(spec.seed, tags::SIMULATE);
    let mut columns = vec![Vec::with_capacity(spec.n); N_FEATURES];
    let mut y = Vec::with_capacity(spec.n);
    let mut row = vec![0.0; N_FEATURES];
    for _ in 0..spec.n {
        for v in row.iter_mut().take(N_UNIFORM) {
            *v = rng.uniform();
        }
        for j in 0..N_CORRELATED {
            let eta = spec.correlated_noise_sd * rng.standard_normal();
            row[N_UNIFORM + j] = (row[4] + eta).clamp(0.0, 1.0);
        }
        let eps = spec.noise_sd * rng.standard_normal();
        y.push(mean_response(&row, spec.correlated_term) + eps);
        for (col, &v) in columns.iter_mut().zip(&row) {
            col.push(v);
        }
    }
    let names = (0..N_FEATURES).map(feature_name).collect();
    let data = Dataset::new(names, columns, Target::Regression(y))?;
    Ok((data, GroundTruth::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::pearson;

    #[test]
    fn shape_and_determinism() {
        let spec = SimSpec {
            n: 200,
            ..SimSpec::with_seed(3)
        };
        let (a, truth) = simulate(&spec).unwrap();
        let (b, _) = simulate(&spec).unwrap();
        assert_eq!(a.n_rows(), 200);
        assert_eq!(a.n_features(), 250);
        assert_eq!(a.feature_names()[0], "x1");
        assert_eq!(a.feature_names()[249], "x250");
        assert_eq!(a, b);
        assert_eq!(truth.correlated.len(), 45);
        let (c, _) = simulate(&SimSpec::with_seed(4)).unwrap();
        assert_ne!(a.column(0)[0], c.column(0)[0]);
        assert!(simulate(&SimSpec {
            n: 0,
            ..SimSpec::default()
        })
        .is_err());
    }

    #[test]
    fn important_set_boundary() {
        let v = important_set();
        assert_eq!(v.len(), 136);
        // 1-based 136 is in, 137 is out.
        assert!(v.contains(&135));
        assert!(!v.contains(&136));
        assert!((0..5).all(|i| v.contains(&i)));
        assert!(v.iter().all(|i| !correlated_set().contains(i)));
    }

    #[test]
    fn half_inputs_match_closed_form() {
        let x = vec![0.5; N_FEATURES];
        // 0.9^(1/3) and 0.9 geometric sums summed in closed form.
        let r = 0.9f64.powf(1.0 / 3.0);
        let decay_sum = r * (1.0 - r.powi(200)) / (1.0 - r);
        let corr_sum = 0.9 * (1.0 - 0.9f64.powi(45)) / 0.1;
        let expected = 0.8 * 0.25f64.sin() + 0.0 + 0.5 + 0.35 + 0.5 * decay_sum + 0.5 * corr_sum;
        let got = mean_response(&x, CorrelatedTerm::Literal);
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        assert!((mean_response(&x, CorrelatedTerm::Columns) - got).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_response_is_exact() {
        let spec = SimSpec {
            n: 50,
            noise_sd: 0.0,
            ..SimSpec::with_seed(8)
        };
        let (d, _) = simulate(&spec).unwrap();
        let y = d.response().unwrap();
        for r in 0..d.n_rows() {
            assert_eq!(y[r], mean_response(&d.row(r), CorrelatedTerm::Literal));
        }
    }

    #[test]
    fn correlated_block_tracks_x5() {
        let (d, _) = simulate(&SimSpec::with_seed(1)).unwrap();
        for j in N_UNIFORM..N_FEATURES {
            let r = pearson(d.column(4), d.column(j));
            assert!(r.abs() > 0.7, "x{} corr {r}", j + 1);
        }
        for j in 0..N_UNIFORM {
            let m = d.column(j).iter().sum::<f64>() / d.n_rows() as f64;
            assert!((m - 0.5).abs() < 0.05);
        }
    }
}
