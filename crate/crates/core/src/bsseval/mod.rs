//! BSS-EVAL source separation metrics.
//!
//! An estimate is split into a part explained by (filtered) copies of the
//! target reference, a further part explained by all references
//! (interference) and a residual (artifacts):
//!
//! ```text
//! s_target = P_target(e)
//! e_interf = P_all(e - s_target)
//! e_artif  = e - s_target - e_interf
//! ```
//!
//! where `P_x` is the least-squares projection onto the span of the
//! references in `x` delayed by `0..filter_len` samples. Signals are
//! zero-padded by `filter_len - 1` samples so every delayed copy fits.

mod project;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use project::{FilteredProjector, ScalarProjector};

pub use report::{read_report, summarize, write_report, write_summary, SourceSummary};

/// Value standing in for an infinite ratio.
pub const METRIC_CAP_DB: f64 = 300.0;

/// Component energies at or below this fraction of the estimate energy
/// (-200 dB) are rounding residue and count as exactly zero.
pub const NOISE_FLOOR: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    /// Number of delays (taps) of the distortion filter.
    pub filter_len: usize,
    /// `false` projects onto the undelayed references only.
    pub use_filters: bool,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        DecompositionConfig {
            filter_len: 512,
            use_filters: true,
        }
    }
}

/// The three orthogonal parts of an estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub s_target: Vec<f64>,
    pub e_interf: Vec<f64>,
    pub e_artif: Vec<f64>,
}

fn energy(x: impl IntoIterator<Item = f64>) -> f64 {
    x.into_iter().map(|v| v * v).sum()
}

/// `10 log10(num / den)` clamped to the cap; a zero denominator caps.
fn ratio_db(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        -METRIC_CAP_DB
    } else if den <= 0.0 {
        METRIC_CAP_DB
    } else {
        (10.0 * (num / den).log10()).clamp(-METRIC_CAP_DB, METRIC_CAP_DB)
    }
}

impl Decomposition {
    fn energies(&self) -> (f64, f64, f64, f64, f64) {
        let n = self.s_target.len();
        let zip = |a: &[f64], b: &[f64]| (0..n).map(move |k| a[k] + b[k]).collect::<Vec<_>>();
        let total = energy((0..n).map(|k| self.s_target[k] + self.e_interf[k] + self.e_artif[k]));
        let floor = NOISE_FLOOR * total;
        let clean = |e: f64| if e <= floor { 0.0 } else { e };
        (
            clean(energy(self.s_target.iter().copied())),
            clean(energy(self.e_interf.iter().copied())),
            clean(energy(self.e_artif.iter().copied())),
            clean(energy(zip(&self.e_interf, &self.e_artif))),
            clean(energy(zip(&self.s_target, &self.e_interf))),
        )
    }

    /// Source-to-distortion ratio in dB.
    pub fn sdr(&self) -> f64 {
        let (s, _, _, ia, _) = self.energies();
        ratio_db(s, ia)
    }

    /// Source-to-interference ratio in dB.
    pub fn sir(&self) -> f64 {
        let (s, i, _, _, _) = self.energies();
        ratio_db(s, i)
    }

    /// Source-to-artifacts ratio in dB.
    pub fn sar(&self) -> f64 {
        let (_, _, a, _, si) = self.energies();
        ratio_db(si, a)
    }

    /// Sum of the parts (equals the zero-padded estimate).
    pub fn reassemble(&self) -> Vec<f64> {
        (0..self.s_target.len())
            .map(|k| self.s_target[k] + self.e_interf[k] + self.e_artif[k])
            .collect()
    }
}

/// Projection machinery for one set of references, reusable across
/// estimates and targets.
pub struct Evaluator {
    inner: Projectors,
    len: usize,
}

enum Projectors {
    Filtered(FilteredProjector),
    Scalar(ScalarProjector),
}

impl Evaluator {
    pub fn new(references: &[Vec<f64>], config: &DecompositionConfig) -> Result<Self> {
        let first = references
            .first()
            .ok_or_else(|| Error::InvalidArgument("no reference signals".into()))?;
        let len = first.len();
        if len == 0 {
            return Err(Error::InvalidArgument("empty reference signal".into()));
        }
        for (i, r) in references.iter().enumerate() {
            if r.len() != len {
                return Err(Error::shape(
                    "bsseval",
                    format!("reference {i} has {} samples, reference 0 has {len}", r.len()),
                ));
            }
            if r.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidArgument(format!("reference {i} is all zeros")));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("reference {i} is not finite")));
            }
        }
        if config.filter_len == 0 {
            return Err(Error::InvalidArgument("filter length must be at least 1".into()));
        }
        let inner = if config.use_filters {
            Projectors::Filtered(FilteredProjector::new(references, config.filter_len)?)
        } else {
            Projectors::Scalar(ScalarProjector::new(references)?)
        };
        Ok(Evaluator { inner, len })
    }

    pub fn num_references(&self) -> usize {
        match &self.inner {
            Projectors::Filtered(p) => p.num_references(),
            Projectors::Scalar(p) => p.num_references(),
        }
    }

    pub fn decompose(&self, estimate: &[f64], target: usize) -> Result<Decomposition> {
        if estimate.len() != self.len {
            return Err(Error::shape(
                "bsseval",
                format!("estimate has {} samples, references have {}", estimate.len(), self.len),
            ));
        }
        if target >= self.num_references() {
            return Err(Error::InvalidArgument(format!(
                "target {target} out of range for {} references",
                self.num_references()
            )));
        }
        let (padded, s_target, e_interf) = match &self.inner {
            Projectors::Filtered(p) => {
                let padded = p.pad(estimate);
                let s = p.project(&padded, Some(target))?;
                let r: Vec<f64> = padded.iter().zip(&s).map(|(e, s)| e - s).collect();
                let i = p.project(&r, None)?;
                (padded, s, i)
            }
            Projectors::Scalar(p) => {
                let s = p.project(estimate, Some(target))?;
                let r: Vec<f64> = estimate.iter().zip(&s).map(|(e, s)| e - s).collect();
                let i = p.project(&r, None)?;
                (estimate.to_vec(), s, i)
            }
        };
        let e_artif = (0..padded.len())
            .map(|k| padded[k] - s_target[k] - e_interf[k])
            .collect();
        Ok(Decomposition {
            s_target,
            e_interf,
            e_artif,
        })
    }
}

/// Decomposes `estimate` with respect to `references[target]`.
pub fn decompose(
    estimate: &[f64],
    references: &[Vec<f64>],
    target: usize,
    config: &DecompositionConfig,
) -> Result<Decomposition> {
    Evaluator::new(references, config)?.decompose(estimate, target)
}

/// SDR of the estimate minus SDR of the unprocessed mixture, both against
/// `references[target]`.
pub fn nsdr(
    estimate: &[f64],
    mixture: &[f64],
    references: &[Vec<f64>],
    target: usize,
    config: &DecompositionConfig,
) -> Result<f64> {
    let ev = Evaluator::new(references, config)?;
    Ok(ev.decompose(estimate, target)?.sdr() - ev.decompose(mixture, target)?.sdr())
}

/// Metrics of one source of one track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub track: String,
    pub source: String,
    pub sdr: f64,
    pub sir: f64,
    pub sar: f64,
    pub nsdr: f64,
    pub length_samples: usize,
}

/// Scores every estimate of a track against its reference.
pub fn evaluate_track(
    track: &str,
    source_names: &[String],
    estimates: &[Vec<f64>],
    references: &[Vec<f64>],
    mixture: &[f64],
    config: &DecompositionConfig,
) -> Result<Vec<EvalResult>> {
    if estimates.len() != references.len() || source_names.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{track}: {} estimates, {} references, {} names",
            estimates.len(),
            references.len(),
            source_names.len()
        )));
    }
    let ev = Evaluator::new(references, config)?;
    estimates
        .iter()
        .enumerate()
        .map(|(i, est)| {
            let d = ev.decompose(est, i)?;
            let base = ev.decompose(mixture, i)?.sdr();
            let sdr = d.sdr();
            Ok(EvalResult {
                track: track.to_string(),
                source: source_names[i].clone(),
                sdr,
                sir: d.sir(),
                sar: d.sar(),
                nsdr: sdr - base,
                length_samples: mixture.len(),
            })
        })
        .collect()
}

/// Length-weighted means of NSDR, SIR and SAR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalMetrics {
    pub gnsdr: f64,
    pub gsir: f64,
    pub gsar: f64,
}

pub fn global_metrics(results: &[EvalResult]) -> Result<GlobalMetrics> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no results to aggregate".into()));
    }
    let total: f64 = results.iter().map(|r| r.length_samples as f64).sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("results have zero total length".into()));
    }
    let mean = |f: fn(&EvalResult) -> f64| {
        results.iter().map(|r| r.length_samples as f64 * f(r)).sum::<f64>() / total
    };
    Ok(GlobalMetrics {
        gnsdr: mean(|r| r.nsdr),
        gsir: mean(|r| r.sir),
        gsar: mean(|r| r.sar),
    })
}

/// Median; for an even count, the mean of the two central values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Median SDR over tracks.
pub fn median_sdr(per_track_sdr: &[f64]) -> Result<f64> {
    median(per_track_sdr)
}
