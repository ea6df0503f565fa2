use std::sync::Arc;

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Pivot ratio (squared) below which a Gram matrix is treated as singular.
const MIN_PIVOT_RATIO: f64 = 1e-14;
/// Diagonal loading, relative to the trace, applied to singular systems.
const RIDGE: f64 = 1e-10;

/// Cholesky factor of a Gram matrix. Rank-deficient systems are loaded with
/// a small ridge and solved as regularized least squares.
fn factor(gram: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = gram.clone().cholesky() {
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if lo * lo >= MIN_PIVOT_RATIO * hi * hi {
            return Ok(ch);
        }
    }
    let n = gram.nrows();
    let ridge = RIDGE * gram.trace();
    debug!("projection system of size {n} is singular; adding ridge {ridge:e}");
    let loaded = gram + DMatrix::identity(n, n) * ridge;
    loaded
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("reference signals span a degenerate space".into()))
}

/// Projector onto delayed copies of the references, via FFT correlations.
pub(super) struct FilteredProjector {
    len: usize,
    taps: usize,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectra: Vec<Vec<Complex<f64>>>,
    all: Cholesky<f64, Dyn>,
    single: Vec<Cholesky<f64, Dyn>>,
}

impl FilteredProjector {
    pub(super) fn new(references: &[Vec<f64>], taps: usize) -> Result<Self> {
        let len = references[0].len();
        let fft_len = (len + taps - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let mut p = FilteredProjector {
            len,
            taps,
            fft_len,
            forward,
            inverse,
            spectra: Vec::new(),
            all: DMatrix::<f64>::identity(1, 1).cholesky().expect("identity"),
            single: Vec::new(),
        };
        p.spectra = references.iter().map(|r| p.spectrum(r)).collect();

        let c = references.len();
        // xcorr[i][j][k] = sum_n r_i(n) r_j(n + k), k mod fft_len
        let xcorr: Vec<Vec<Vec<f64>>> = (0..c)
            .map(|i| (0..c).map(|j| p.correlate(&p.spectra[i], &p.spectra[j])).collect())
            .collect();
        let lag = |i: usize, j: usize, d: isize| -> f64 {
            let k = if d >= 0 { d as usize } else { fft_len - (-d) as usize };
            xcorr[i][j][k]
        };
        let mut gram = DMatrix::zeros(c * taps, c * taps);
        for i in 0..c {
            for j in 0..c {
                for a in 0..taps {
                    for b in 0..taps {
                        gram[(i * taps + a, j * taps + b)] = lag(i, j, a as isize - b as isize);
                    }
                }
            }
        }
        p.single = (0..c)
            .map(|t| factor(gram.view((t * taps, t * taps), (taps, taps)).into_owned()))
            .collect::<Result<_>>()?;
        p.all = factor(gram)?;
        Ok(p)
    }

    pub(super) fn num_references(&self) -> usize {
        self.spectra.len()
    }

    /// Zero-pads a signal of the reference length by `taps - 1`.
    pub(super) fn pad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        out.resize(self.len + self.taps - 1, 0.0);
        out
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(self.fft_len, Complex::new(0.0, 0.0));
        self.forward.process(&mut buf);
        buf
    }

    fn inverse_real(&self, mut buf: Vec<Complex<f64>>) -> Vec<f64> {
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// `out[k] = sum_n a(n) b(n + k)` (circular over the FFT length).
    fn correlate(&self, a: &[Complex<f64>], b: &[Complex<f64>]) -> Vec<f64> {
        self.inverse_real(a.iter().zip(b).map(|(x, y)| x.conj() * y).collect())
    }

    /// Projects a padded signal onto the delayed copies of the target
    /// reference (`Some`) or of all references (`None`).
    pub(super) fn project(&self, x: &[f64], target: Option<usize>) -> Result<Vec<f64>> {
        let out_len = self.len + self.taps - 1;
        debug_assert_eq!(x.len(), out_len);
        let xs = self.spectrum(x);
        let refs: Vec<usize> = match target {
            Some(t) => vec![t],
            None => (0..self.spectra.len()).collect(),
        };
        let mut rhs = DVector::zeros(refs.len() * self.taps);
        for (slot, &i) in refs.iter().enumerate() {
            let xc = self.correlate(&self.spectra[i], &xs);
            for a in 0..self.taps {
                rhs[slot * self.taps + a] = xc[a];
            }
        }
        let coeffs = match target {
            Some(t) => self.single[t].solve(&rhs),
            None => self.all.solve(&rhs),
        };
        let mut acc = vec![Complex::new(0.0, 0.0); self.fft_len];
        for (slot, &i) in refs.iter().enumerate() {
            let filt = self.spectrum(&coeffs.as_slice()[slot * self.taps..(slot + 1) * self.taps]);
            for ((a, r), f) in acc.iter_mut().zip(&self.spectra[i]).zip(&filt) {
                *a += r * f;
            }
        }
        let mut out = self.inverse_real(acc);
        out.truncate(out_len);
        Ok(out)
    }
}

/// Projector onto the undelayed references (plain least squares).
pub(super) struct ScalarProjector {
    references: Vec<Vec<f64>>,
    norms: Vec<f64>,
    all: Cholesky<f64, Dyn>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ScalarProjector {
    pub(super) fn new(references: &[Vec<f64>]) -> Result<Self> {
        let c = references.len();
        let gram = DMatrix::from_fn(c, c, |i, j| dot(&references[i], &references[j]));
        Ok(ScalarProjector {
            norms: (0..c).map(|i| gram[(i, i)]).collect(),
            all: factor(gram)?,
            references: references.to_vec(),
        })
    }

    pub(super) fn num_references(&self) -> usize {
        self.references.len()
    }

    pub(super) fn project(&self, x: &[f64], target: Option<usize>) -> Result<Vec<f64>> {
        let combine = |weights: &[(usize, f64)]| -> Vec<f64> {
            (0..x.len())
                .map(|k| weights.iter().map(|&(i, w)| w * self.references[i][k]).sum())
                .collect()
        };
        Ok(match target {
            Some(t) => combine(&[(t, dot(x, &self.references[t]) / self.norms[t])]),
            None => {
                let rhs = DVector::from_iterator(
                    self.references.len(),
                    self.references.iter().map(|r| dot(x, r)),
                );
                let c = self.all.solve(&rhs);
                combine(&c.iter().copied().enumerate().collect::<Vec<_>>())
            }
        })
    }
}
