//! Finite positive sequences, duality m/σ(m), regularity checks,
//! Dini regularization and the doubling minorant.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Relative slack used when deciding `σ(rm) ≥ 2σ(m)`; power sequences hit
/// the bound with equality and `powf` is not correctly rounded.
pub const REGULARITY_RTOL: f64 = 1e-12;

/// A positive sequence σ(1..=N). Index 0 is read as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct PosSequence {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    horizon: usize,
    values: Vec<f64>,
}

impl TryFrom<RawSequence> for PosSequence {
    type Error = LabError;
    fn try_from(raw: RawSequence) -> Result<Self> {
        if raw.horizon != raw.values.len() {
            return Err(LabError::InvalidInput(format!(
                "horizon {} does not match {} values",
                raw.horizon,
                raw.values.len()
            )));
        }
        PosSequence::new(raw.values)
    }
}

impl From<PosSequence> for RawSequence {
    fn from(s: PosSequence) -> Self {
        RawSequence {
            horizon: s.values.len(),
            values: s.values,
        }
    }
}

impl PosSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LabError::InvalidInput(
                "sequence horizon must be at least 1".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(LabError::InvalidInput(format!(
                "sequence value at index {} is not a positive finite number",
                i + 1
            )));
        }
        Ok(PosSequence { values })
    }

    pub fn from_fn(horizon: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new((1..=horizon).map(f).collect())
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// σ(m); σ(0) = 0. Panics past the horizon.
    pub fn get(&self, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else {
            self.values[m - 1]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// m/σ(m), with the value 1 returned at m = 0 so that ratios by σ* stay finite.
    pub fn dual_at(&self, m: usize) -> f64 {
        if m == 0 {
            1.0
        } else {
            m as f64 / self.get(m)
        }
    }

    pub fn truncate(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 || horizon > self.horizon() {
            return Err(LabError::InvalidInput(format!(
                "cannot truncate horizon {} to {}",
                self.horizon(),
                horizon
            )));
        }
        Ok(PosSequence {
            values: self.values[..horizon].to_vec(),
        })
    }

    /// First index m (1-based) where σ(m) < σ(m-1), if any.
    pub fn first_decrease(&self) -> Option<usize> {
        (1..self.values.len())
            .find(|&i| self.values[i] < self.values[i - 1])
            .map(|i| i + 1)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.first_decrease().is_none()
    }

    /// CSV table `m,value,dual_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,value,dual_value\n");
        for m in 1..=self.horizon() {
            out.push_str(&format!("{},{},{}\n", m, self.get(m), self.dual_at(m)));
        }
        out
    }
}

/// σ*(m) = m/σ(m).
pub fn dual_sequence(s: &PosSequence) -> PosSequence {
    PosSequence {
        values: s
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (i + 1) as f64 / v)
            .collect(),
    }
}

/// m ↦ m^α.
pub fn power_sequence(alpha: f64, horizon: usize) -> Result<PosSequence> {
    if !alpha.is_finite() {
        return Err(LabError::InvalidInput("exponent must be finite".into()));
    }
    PosSequence::from_fn(horizon, |m| (m as f64).powf(alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub lrp_witness: Option<usize>,
    pub urp_witness: Option<usize>,
    pub dini_constant: Option<f64>,
    pub horizon_used: usize,
    /// Set when r_max exceeds the horizon, so large r were not testable.
    pub restricted: bool,
}

fn least_doubling_ratio(s: &PosSequence, r_max: usize) -> Option<usize> {
    let n = s.horizon();
    (2..=r_max.min(n))
        .find(|&r| (1..=n / r).all(|m| s.get(r * m) >= 2.0 * s.get(m) * (1.0 - REGULARITY_RTOL)))
}

/// Least C with (1/C)σ(m)/m ≤ σ(m) − σ(m−1) ≤ Cσ(m)/m over the horizon.
pub fn dini_constant(s: &PosSequence) -> Option<f64> {
    let mut c: f64 = 1.0;
    for m in 1..=s.horizon() {
        let diff = s.get(m) - s.get(m - 1);
        if diff <= 0.0 {
            return None;
        }
        let ratio = diff * m as f64 / s.get(m);
        c = c.max(ratio).max(1.0 / ratio);
    }
    Some(c)
}

pub fn check_regularity(s: &PosSequence, r_max: usize) -> Result<RegularityReport> {
    if r_max < 2 {
        return Err(LabError::InvalidInput("r_max must be at least 2".into()));
    }
    Ok(RegularityReport {
        lrp_witness: least_doubling_ratio(s, r_max),
        urp_witness: least_doubling_ratio(&dual_sequence(s), r_max),
        dini_constant: dini_constant(s),
        horizon_used: s.horizon(),
        restricted: r_max > s.horizon(),
    })
}

/// σ(m) = Σ_{n≤m} τ(n)/n. Requires τ and τ* nondecreasing.
pub fn dini_regularize(tau: &PosSequence) -> Result<PosSequence> {
    if let Some(m) = tau.first_decrease() {
        return Err(LabError::InvalidSequence(format!(
            "tau decreases at index {m}"
        )));
    }
    if let Some(m) = dual_sequence(tau).first_decrease() {
        return Err(LabError::InvalidSequence(format!(
            "dual of tau decreases at index {m}"
        )));
    }
    let mut acc = 0.0;
    let values = (1..=tau.horizon())
        .map(|n| {
            acc += tau.get(n) / n as f64;
            acc
        })
        .collect();
    PosSequence::new(values)
}

/// g(1) = f(1), g(m+1) = min{f(m+1), (m+1)/m · g(m)}.
pub fn doubling_minorant(f: &PosSequence) -> Result<PosSequence> {
    if let Some(m) = f.first_decrease() {
        return Err(LabError::InvalidSequence(format!(
            "sequence decreases at index {m}"
        )));
    }
    let mut g = Vec::with_capacity(f.horizon());
    g.push(f.get(1));
    for m in 1..f.horizon() {
        // multiply before dividing so integer-valued inputs stay exact
        let grown = g[m - 1] * (m + 1) as f64 / m as f64;
        g.push(f.get(m + 1).min(grown));
    }
    PosSequence::new(g)
}
