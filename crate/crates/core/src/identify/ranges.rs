use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::cfat::CfatResult;
use crate::error::{Error, Result};

/// Per-joint applied-torque ranges and the resulting maximum voluntary torques.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueRanges {
    pub tau_minus: DVector<f64>,
    pub tau_plus: DVector<f64>,
    /// Scaling ratio max(|τ⁻|, |τ⁺|).
    pub g: DVector<f64>,
    /// Samples dropped as outliers, per joint.
    pub removed: Vec<usize>,
}

impl TorqueRanges {
    /// Normalized control bounds [τ⁻/g, τ⁺/g].
    pub fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        (self.tau_minus.component_div(&self.g), self.tau_plus.component_div(&self.g))
    }

    pub fn as_pairs(&self) -> Vec<[f64; 2]> {
        self.tau_minus.iter().zip(self.tau_plus.iter()).map(|(&a, &b)| [a, b]).collect()
    }
}

/// Min/max of the survivors after dropping samples more than three standard deviations from the
/// mean. Samples are sorted first so the result does not depend on input order.
fn joint_range(samples: &mut [f64]) -> Option<(f64, f64, usize)> {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let keep: Vec<f64> = samples.iter().copied().filter(|x| (x - mean).abs() <= 3.0 * sd).collect();
    Some((*keep.first()?, *keep.last()?, samples.len() - keep.len()))
}

/// Torque ranges from a set of CFAT results, with warnings for ranges that do not straddle zero.
pub fn extract_torque_ranges(results: &[CfatResult]) -> Result<(TorqueRanges, Vec<String>)> {
    let samples: Vec<&DVector<f64>> = results.iter().flat_map(|r| r.tau_seq.iter()).collect();
    let Some(first) = samples.first() else {
        return Err(Error::InvalidArgument("no CFAT torques to extract ranges from".into()));
    };
    let n = first.len();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    let mut removed = vec![0; n];
    let mut warnings = Vec::new();
    for j in 0..n {
        let mut col: Vec<f64> = samples.iter().map(|t| t[j]).collect();
        let (a, b, r) = joint_range(&mut col).ok_or_else(|| Error::InvalidArgument(format!("joint {j}: no torques left")))?;
        (lo[j], hi[j], removed[j]) = (a, b, r);
        if a == b {
            warnings.push(format!("joint {j}: torque range collapsed to {a:.4} N·m"));
        } else if a > 0.0 || b < 0.0 {
            warnings.push(format!("joint {j}: torque range [{a:.4}, {b:.4}] N·m does not contain zero"));
        }
    }
    let g = lo.zip_map(&hi, |a: f64, b: f64| a.abs().max(b.abs()));
    if let Some(j) = g.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument(format!("joint {j}: all torques are zero")));
    }
    Ok((TorqueRanges { tau_minus: lo, tau_plus: hi, g, removed }, warnings))
}

/// Plain-text table of per-joint torque ranges and normalized bounds.
pub fn torque_report(ranges: &TorqueRanges, joint_names: &[String]) -> String {
    let (ulo, uhi) = ranges.bounds();
    let mut s = format!(
        "{:<20} {:>10} {:>10} {:>10} {:>9} {:>9} {:>8}\n",
        "joint", "tau_minus", "tau_plus", "g", "u_lo", "u_hi", "removed"
    );
    for j in 0..ranges.g.len() {
        let name = joint_names.get(j).map_or("?", |s| s.as_str());
        s += &format!(
            "{:<20} {:>10.3} {:>10.3} {:>10.3} {:>9.3} {:>9.3} {:>8}\n",
            name, ranges.tau_minus[j], ranges.tau_plus[j], ranges.g[j], ulo[j], uhi[j], ranges.removed[j]
        );
    }
    s
}
