//! Comparison of sampled solutions of `v'' + v = Z` with pure sinusoids.
//!
//! Both comparisons certify a sup-norm bound of the form `C (ε + η)` where
//! `ε = ‖Z‖_{L²(0,l)}` and `η` is the mismatch of the data; the boundary
//! version carries an extra `1 / sin l`.

use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Constant in both comparison bounds. Duhamel gives
/// `sup |v − u| ≤ √π ε + 2η ≤ 4 (ε + η)` for the Cauchy problem.
pub const COMPARISON_CONSTANT: f64 = 4.0;
/// Below this value of `sin l` the boundary comparison is refused.
pub const MIN_SIN_L: f64 = 0.05;
/// Longest accepted profile domain: `π` plus graph-metric slack.
pub const MAX_LENGTH: f64 = std::f64::consts::PI + 0.2;
pub const MIN_SAMPLES: usize = 11;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("profile needs at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("profile length {0} exceeds {MAX_LENGTH}")]
    TooLong(f64),
    #[error("near-conjugate endpoint: sin(l) = {sin_l} < {MIN_SIN_L}")]
    NearConjugate { sin_l: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Samples `v(t_j)` at `t_j = j h`, `j = 0..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile1D {
    step: f64,
    values: Vec<f64>,
}

impl Profile1D {
    pub fn new(values: Vec<f64>, step: f64) -> Result<Self, OdeError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(OdeError::InvalidStep(step));
        }
        if values.len() < MIN_SAMPLES {
            return Err(OdeError::TooFewSamples(values.len()));
        }
        let l = step * (values.len() - 1) as f64;
        if l > MAX_LENGTH {
            return Err(OdeError::TooLong(l));
        }
        Ok(Self { step, values })
    }

    /// Samples `f` on `[0, length]` with `intervals` uniform steps.
    pub fn from_fn(length: f64, intervals: usize, f: impl Fn(f64) -> f64) -> Result<Self, OdeError> {
        let h = length / intervals as f64;
        Self::new((0..=intervals).map(|j| f(j as f64 * h)).collect(), h)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    /// Derivative estimates: centered in the interior, 3-point one-sided at
    /// both ends.
    pub fn derivative(&self) -> Vec<f64> {
        let (v, h, n) = (&self.values, self.step, self.values.len());
        (0..n)
            .map(|j| match j {
                0 => (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h),
                j if j == n - 1 => (3.0 * v[j] - 4.0 * v[j - 1] + v[j - 2]) / (2.0 * h),
                j => (v[j + 1] - v[j - 1]) / (2.0 * h),
            })
            .collect()
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, OdeError> {
        Self::parse_csv(std::fs::File::open(path)?)
    }

    /// Two-column `t,v` CSV, optional header, uniform `t` starting at 0.
    pub fn parse_csv(reader: impl std::io::Read) -> Result<Self, OdeError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut t = Vec::new();
        let mut v = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| OdeError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 2 {
                return Err(OdeError::Parse { line, msg: format!("expected 2 columns, found {}", rec.len()) });
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    t.push(a);
                    v.push(b);
                }
                _ if i == 0 => continue,
                _ => return Err(OdeError::Parse { line, msg: format!("invalid numbers {:?}", rec.iter().collect::<Vec<_>>()) }),
            }
        }
        if t.len() < 2 {
            return Err(OdeError::TooFewSamples(t.len()));
        }
        let h = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        let tol = 1e-6 * h.abs().max(1e-12);
        if t[0].abs() > tol {
            return Err(OdeError::Parse { line: 1, msg: format!("profile must start at t = 0, found {}", t[0]) });
        }
        for (j, tj) in t.iter().enumerate() {
            if (tj - j as f64 * h).abs() > tol {
                return Err(OdeError::Parse { line: j as u64 + 1, msg: "samples are not uniformly spaced".into() });
            }
        }
        Self::new(v, h)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,v\n");
        for (j, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.t(j), v));
        }
        out
    }
}

/// Forcing term recovered from a profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forcing {
    /// `Z` at the interior samples `j = 1..N-1`.
    pub z: Vec<f64>,
    /// `(∫ Z²)^{1/2}` by the trapezoid rule over the interior samples.
    pub eps: f64,
}

pub fn residual_forcing(profile: &Profile1D) -> Forcing {
    let (v, h) = (profile.values(), profile.step());
    let z: Vec<f64> = (1..v.len() - 1)
        .map(|j| (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (h * h) + v[j])
        .collect();
    Forcing { eps: trapezoid_sq(&z, h).sqrt(), z }
}

fn trapezoid_sq(z: &[f64], h: f64) -> f64 {
    match z.len() {
        0 => 0.0,
        1 => 0.0,
        n => h * (z.iter().map(|x| x * x).sum::<f64>() - 0.5 * (z[0] * z[0] + z[n - 1] * z[n - 1])),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct Comparison {
    pub sup_value: f64,
    pub sup_derivative: f64,
    pub eps: f64,
    pub eta: f64,
    pub bound: f64,
    /// Truncation error allowance of the sampled derivative,
    /// `(h²/3) max |v'''|` with `v'''` from third differences.
    pub derivative_tolerance: f64,
    /// Both sups are within `bound`. This says the lemma's bound holds, not
    /// that the profiles are close.
    pub bound_ok: bool,
}

fn compare_against(profile: &Profile1D, eta: f64, bound_factor: f64, u: impl Fn(f64) -> (f64, f64)) -> Comparison {
    let eps = residual_forcing(profile).eps;
    let dv = profile.derivative();
    let mut sup_value: f64 = 0.0;
    let mut sup_derivative: f64 = 0.0;
    for (j, (v, d)) in profile.values().iter().zip(&dv).enumerate() {
        let (uj, duj) = u(profile.t(j));
        sup_value = sup_value.max((v - uj).abs());
        sup_derivative = sup_derivative.max((d - duj).abs());
    }
    let bound = bound_factor * (eps + eta);
    let derivative_tolerance = derivative_truncation(profile);
    Comparison {
        sup_value,
        sup_derivative,
        eps,
        eta,
        bound,
        derivative_tolerance,
        bound_ok: sup_value <= bound && sup_derivative <= bound + derivative_tolerance,
    }
}

fn derivative_truncation(profile: &Profile1D) -> f64 {
    let (v, h) = (profile.values(), profile.step());
    let third = v
        .windows(4)
        .map(|w| (w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0]).abs() / (h * h * h))
        .fold(0.0, f64::max);
    h * h / 3.0 * third
}

/// Compares with `u(t) = a cos t + b sin t` (Cauchy data at 0).
pub fn compare_cauchy(profile: &Profile1D, a: f64, b: f64) -> Comparison {
    let v = profile.values();
    let dv0 = profile.derivative()[0];
    let eta = (v[0] - a).abs().max((dv0 - b).abs());
    compare_against(profile, eta, COMPARISON_CONSTANT, |t| (a * t.cos() + b * t.sin(), -a * t.sin() + b * t.cos()))
}

/// Compares with the solution of `u'' + u = 0`, `u(0) = a`, `u(l) = b`.
pub fn compare_boundary(profile: &Profile1D, a: f64, b: f64) -> Result<Comparison, OdeError> {
    let l = profile.length();
    let sin_l = l.sin();
    if !(sin_l >= MIN_SIN_L) || l >= std::f64::consts::PI {
        return Err(OdeError::NearConjugate { sin_l });
    }
    let v = profile.values();
    let eta = (v[0] - a).abs().max((v[v.len() - 1] - b).abs());
    let c = (b - a * l.cos()) / sin_l;
    Ok(compare_against(profile, eta, COMPARISON_CONSTANT / sin_l, |t| {
        (a * t.cos() + c * t.sin(), -a * t.sin() + c * t.cos())
    }))
}

/// Variation of parameters for `v'' + v = Z`, `v(0) = a`, `v'(0) = b`, with
/// `Z` sampled uniformly on `[0, l]`:
/// `v(t) = a cos t + b sin t + sin t ∫₀ᵗ cos s Z − cos t ∫₀ᵗ sin s Z`.
pub fn duhamel_solve(z: &[f64], a: f64, b: f64, l: f64) -> Result<Profile1D, OdeError> {
    if z.len() < 2 {
        return Err(OdeError::TooFewSamples(z.len()));
    }
    let h = l / (z.len() - 1) as f64;
    let mut c_int = 0.0;
    let mut s_int = 0.0;
    let mut values = Vec::with_capacity(z.len());
    for j in 0..z.len() {
        let t = j as f64 * h;
        if j > 0 {
            let t0 = t - h;
            c_int += 0.5 * h * (t0.cos() * z[j - 1] + t.cos() * z[j]);
            s_int += 0.5 * h * (t0.sin() * z[j - 1] + t.sin() * z[j]);
        }
        values.push(a * t.cos() + b * t.sin() + t.sin() * c_int - t.cos() * s_int);
    }
    Profile1D::new(values, h)
}
