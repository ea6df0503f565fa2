//! BSS-EVAL decomposition and aggregate metrics, checked against explicit
//! least-squares projections built with a dense QR factorization.

mod common;

use common::{rng, uniform};
use hgsep_core::bsseval::{
    decompose, global_metrics, median, median_sdr, nsdr, read_report, summarize, write_report, write_summary,
    Decomposition, DecompositionConfig, EvalResult, Evaluator, METRIC_CAP_DB,
};
use nalgebra::{DMatrix, DVector};

fn noise(len: usize, seed: u64) -> Vec<f64> {
    uniform(&mut rng(seed), &[len], -1.0, 1.0).into_data()
}

/// A smooth-ish reference: noise through a short moving average, so the
/// references are correlated across lags like real audio.
fn reference(len: usize, seed: u64) -> Vec<f64> {
    let n = noise(len + 4, seed);
    (0..len).map(|i| n[i..i + 5].iter().sum::<f64>() / 5.0).collect()
}

fn filtered(taps: usize) -> DecompositionConfig {
    DecompositionConfig {
        filter_len: taps,
        use_filters: true,
    }
}

/// Columns are the zero-padded references delayed by `0..taps` samples.
fn delay_basis(refs: &[&[f64]], taps: usize) -> DMatrix<f64> {
    let len = refs[0].len();
    let rows = len + taps - 1;
    DMatrix::from_fn(rows, refs.len() * taps, |r, c| {
        let (which, delay) = (c / taps, c % taps);
        if r >= delay && r - delay < len {
            refs[which][r - delay]
        } else {
            0.0
        }
    })
}

/// Orthogonal projection of `x` onto the column span of `basis`.
fn project(basis: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let q = basis.clone().qr().q();
    let x = DVector::from_column_slice(x);
    (&q * (q.transpose() * &x)).as_slice().to_vec()
}

fn pad(x: &[f64], taps: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    out.resize(x.len() + taps - 1, 0.0);
    out
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[test]
fn parts_are_additive_and_orthogonal() {
    let len = 2000;
    let refs = vec![reference(len, 1), reference(len, 2), reference(len, 3)];
    let est: Vec<f64> = (0..len)
        .map(|i| 0.8 * refs[0][i] - 0.3 * refs[2][(i + 7) % len] + 0.05 * noise(len, 4)[i])
        .collect();
    for cfg in [filtered(32), filtered(1), DecompositionConfig { filter_len: 1, use_filters: false }] {
        let d = decompose(&est, &refs, 0, &cfg).unwrap();
        let padded = if cfg.use_filters { pad(&est, cfg.filter_len) } else { est.clone() };
        assert!(max_diff(&d.reassemble(), &padded) <= 1e-9 * max_abs(&padded));
        let total = energy(&padded);
        assert!(dot(&d.s_target, &d.e_interf).abs() <= 1e-6 * total);
        assert!(dot(&add(&d.s_target, &d.e_interf), &d.e_artif).abs() <= 1e-6 * total);
        assert!(d.sar() >= d.sdr() && d.sir() >= d.sdr());
    }
}

#[test]
fn decomposition_matches_explicit_projection() {
    let (len, taps) = (1500, 24);
    let refs = vec![reference(len, 5), reference(len, 6)];
    let est: Vec<f64> = (0..len)
        .map(|i| refs[0][i] + 0.5 * if i >= 3 { refs[1][i - 3] } else { 0.0 } + 0.1 * noise(len, 7)[i])
        .collect();
    let d = decompose(&est, &refs, 0, &filtered(taps)).unwrap();
    let e = pad(&est, taps);
    let s = project(&delay_basis(&[&refs[0]], taps), &e);
    let all = project(&delay_basis(&[&refs[0], &refs[1]], taps), &e);
    let interf: Vec<f64> = all.iter().zip(&s).map(|(a, b)| a - b).collect();
    let scale = max_abs(&e);
    assert!(max_diff(&d.s_target, &s) <= 1e-9 * scale);
    assert!(max_diff(&d.e_interf, &interf) <= 1e-9 * scale);
}

#[test]
fn perfect_estimate_hits_the_cap() {
    let len = 4000;
    let refs = vec![reference(len, 8), reference(len, 9)];
    let d = decompose(&refs[1], &refs, 1, &DecompositionConfig::default()).unwrap();
    let scale = max_abs(&refs[1]);
    assert!(max_abs(&d.e_interf) <= 1e-9 * scale);
    assert!(max_abs(&d.e_artif) <= 1e-9 * scale);
    assert_eq!((d.sdr(), d.sir(), d.sar()), (METRIC_CAP_DB, METRIC_CAP_DB, METRIC_CAP_DB));
}

#[test]
fn interference_is_recognised() {
    // one second at 8 kHz; the added source lies in the span of all
    // references, so nothing is artifact, and the interference is what the
    // explicit projections assign beyond the target's own delays
    let (len, taps) = (8000, 512);
    let refs = vec![reference(len, 10), reference(len, 11)];
    let est = add(&refs[0], &refs[1]);
    let d = decompose(&est, &refs, 0, &DecompositionConfig::default()).unwrap();
    let e = pad(&est, taps);
    let s = project(&delay_basis(&[&refs[0]], taps), &e);
    let all = project(&delay_basis(&[&refs[0], &refs[1]], taps), &e);
    let interf: Vec<f64> = all.iter().zip(&s).map(|(a, b)| a - b).collect();
    let scale = max_abs(&est);
    assert!(max_abs(&d.e_artif) <= 1e-6 * scale);
    assert!(max_diff(&d.s_target, &s) <= 1e-6 * scale);
    assert!(max_diff(&d.e_interf, &interf) <= 1e-6 * scale);
    // the target's 512 delays can only absorb a small share of the other
    // source, so the interference is close to it
    let leak: Vec<f64> = d.e_interf.iter().zip(pad(&refs[1], taps)).map(|(a, b)| a - b).collect();
    assert!(energy(&leak) < 0.1 * energy(&refs[1]));
    assert_eq!(d.sar(), METRIC_CAP_DB);
}

/// Target plus noise made orthogonal to every delayed reference, with
/// `ratio` times less energy than the target.
fn orthogonal_artifact_case(len: usize, taps: usize, ratio: f64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let refs = vec![reference(len, 12), reference(len, 13)];
    let basis = delay_basis(&[&refs[0], &refs[1]], taps);
    // the estimate must fit in the unpadded length: keep the noise inside
    // the first `len` samples by adding the padding rows' unit vectors
    let rows = len + taps - 1;
    let tail = DMatrix::from_fn(rows, taps - 1, |r, c| if r == len + c { 1.0 } else { 0.0 });
    let mut extended = DMatrix::zeros(rows, basis.ncols() + tail.ncols());
    extended.columns_mut(0, basis.ncols()).copy_from(&basis);
    extended.columns_mut(basis.ncols(), tail.ncols()).copy_from(&tail);
    let raw = pad(&noise(len, 14), taps);
    let inside = project(&extended, &raw);
    let orth: Vec<f64> = raw.iter().zip(&inside).map(|(a, b)| a - b).collect();
    assert!(max_abs(&orth[len..]) < 1e-12);
    let gain = (energy(&refs[0]) / (ratio * energy(&orth))).sqrt();
    let artifact: Vec<f64> = orth[..len].iter().map(|v| v * gain).collect();
    let est = add(&refs[0], &artifact);
    (refs, est, artifact)
}

#[test]
fn orthogonal_artifact_gives_twenty_db() {
    let (refs, est, artifact) = orthogonal_artifact_case(4000, 512, 100.0);
    let d = decompose(&est, &refs, 0, &DecompositionConfig::default()).unwrap();
    assert!(max_diff(&d.e_artif, &pad(&artifact, 512)) <= 1e-6 * max_abs(&artifact));
    assert!((d.sdr() - 20.0).abs() <= 0.01, "sdr {}", d.sdr());
    assert!((d.sar() - 20.0).abs() <= 0.01, "sar {}", d.sar());
    assert_eq!(d.sir(), METRIC_CAP_DB);
}

#[test]
fn metrics_are_scale_invariant() {
    let len = 3000;
    let refs = vec![reference(len, 15), reference(len, 16)];
    let est: Vec<f64> = (0..len).map(|i| 0.7 * refs[0][i] + 0.2 * refs[1][i] + 0.1 * noise(len, 17)[i]).collect();
    let ev = Evaluator::new(&refs, &filtered(64)).unwrap();
    let metrics = |d: Decomposition| [d.sdr(), d.sir(), d.sar()];
    let base = metrics(ev.decompose(&est, 0).unwrap());
    for alpha in [1e-3, 0.37, 5.0, 1e4] {
        let scaled: Vec<f64> = est.iter().map(|v| v * alpha).collect();
        let m = metrics(ev.decompose(&scaled, 0).unwrap());
        for (a, b) in base.iter().zip(&m) {
            assert!((a - b).abs() < 1e-9, "alpha {alpha}: {base:?} vs {m:?}");
        }
    }
}

#[test]
fn single_tap_filter_equals_scalar_projection() {
    let len = 2500;
    let refs = vec![reference(len, 18), reference(len, 19), reference(len, 20)];
    let est: Vec<f64> = (0..len).map(|i| refs[1][i] - 0.4 * refs[2][i] + 0.3 * noise(len, 21)[i]).collect();
    let scalar = DecompositionConfig {
        filter_len: 1,
        use_filters: false,
    };
    for target in 0..3 {
        let a = decompose(&est, &refs, target, &filtered(1)).unwrap();
        let b = decompose(&est, &refs, target, &scalar).unwrap();
        let scale = max_abs(&est);
        assert!(max_diff(&a.s_target, &b.s_target) <= 1e-9 * scale);
        assert!(max_diff(&a.e_interf, &b.e_interf) <= 1e-9 * scale);
        assert!(max_diff(&a.e_artif, &b.e_artif) <= 1e-9 * scale);
        assert!((a.sdr() - b.sdr()).abs() < 1e-9);
        assert!((a.sir() - b.sir()).abs() < 1e-9);
        assert!((a.sar() - b.sar()).abs() < 1e-9);
    }
}

#[test]
fn nsdr_of_the_mixture_is_zero() {
    let len = 3000;
    let refs = vec![reference(len, 22), reference(len, 23)];
    let mix = add(&refs[0], &refs[1]);
    for target in 0..2 {
        assert_eq!(nsdr(&mix, &mix, &refs, target, &DecompositionConfig::default()).unwrap(), 0.0);
        let perfect = nsdr(&refs[target], &mix, &refs, target, &DecompositionConfig::default()).unwrap();
        let base = decompose(&mix, &refs, target, &DecompositionConfig::default()).unwrap().sdr();
        assert_eq!(perfect, METRIC_CAP_DB - base);
        assert!(perfect > 0.0);
    }
}

#[test]
fn dependent_references_fall_back_to_ridge() {
    let len = 1000;
    let a = reference(len, 24);
    let refs = vec![a.clone(), a.iter().map(|v| 2.0 * v).collect()];
    let est = add(&a, &noise(len, 25).iter().map(|v| 0.1 * v).collect::<Vec<_>>());
    for cfg in [filtered(8), DecompositionConfig { filter_len: 1, use_filters: false }] {
        let d = decompose(&est, &refs, 0, &cfg).unwrap();
        assert!(d.sdr().is_finite() && d.sir().is_finite() && d.sar().is_finite());
        assert!(d.sdr() > 10.0);
    }
}

fn result(track: &str, source: &str, sdr: f64, nsdr: f64, len: usize) -> EvalResult {
    EvalResult {
        track: track.into(),
        source: source.into(),
        sdr,
        sir: sdr + 5.0,
        sar: sdr + 1.0,
        nsdr,
        length_samples: len,
    }
}

#[test]
fn global_metrics_are_length_weighted() {
    let rs = vec![
        result("a", "voice", 1.0, 0.0, 100),
        result("b", "voice", 2.0, 4.0, 300),
    ];
    let g = global_metrics(&rs).unwrap();
    assert_eq!(g.gnsdr, 3.0);
    // hand recomputation of the other two aggregates
    assert!((g.gsir - (100.0 * 6.0 + 300.0 * 7.0) / 400.0).abs() < 1e-12);
    assert!((g.gsar - (100.0 * 2.0 + 300.0 * 3.0) / 400.0).abs() < 1e-12);

    let single = global_metrics(&rs[..1]).unwrap();
    assert_eq!((single.gnsdr, single.gsir, single.gsar), (0.0, 6.0, 2.0));

    let equal = vec![
        result("a", "v", 0.0, 1.0, 50),
        result("b", "v", 0.0, 2.0, 50),
        result("c", "v", 0.0, 6.0, 50),
    ];
    assert!((global_metrics(&equal).unwrap().gnsdr - 3.0).abs() < 1e-12);
    assert!(global_metrics(&[]).is_err());
}

#[test]
fn medians_follow_order_statistics() {
    assert_eq!(median_sdr(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
    assert_eq!(median_sdr(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
    assert_eq!(median(&[-1.0]).unwrap(), -1.0);
    assert!(median_sdr(&[]).is_err());
}

#[test]
fn report_round_trips_and_summary_recomputes() {
    let dir = tempfile::tempdir().unwrap();
    let rs = vec![
        result("t1", "voice", 5.0, 3.0, 1000),
        result("t1", "accompaniment", 8.0, 1.0, 1000),
        result("t2", "voice", 7.0, 5.0, 3000),
        result("t2", "accompaniment", 6.0, 2.0, 3000),
        result("t3", "voice", 1.0, -1.0, 2000),
        result("t3", "accompaniment", 9.0, 4.0, 2000),
    ];
    let path = dir.path().join("report.csv");
    write_report(&path, &rs).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("track,source,sdr,sir,sar,nsdr,length_samples\n"));
    assert_eq!(read_report(&path).unwrap(), rs);

    let summary = summarize(&rs).unwrap();
    assert_eq!(summary.len(), 2);
    assert_eq!(summary[0].source, "voice");
    assert_eq!(summary[0].tracks, 3);
    assert_eq!(summary[0].median_sdr, 5.0);
    assert_eq!(summary[0].median_nsdr, 3.0);
    assert!((summary[0].gnsdr - (3000.0 + 15000.0 - 2000.0) / 6000.0).abs() < 1e-12);
    assert_eq!(summary[1].median_sdr, 8.0);
    write_summary(dir.path().join("summary.csv"), &summary).unwrap();
}

#[test]
fn invalid_inputs_are_rejected() {
    let refs = vec![reference(100, 26), reference(100, 27)];
    let cfg = filtered(4);
    assert!(decompose(&[0.0; 99], &refs, 0, &cfg).is_err());
    assert!(decompose(&[0.0; 100], &refs, 2, &cfg).is_err());
    assert!(Evaluator::new(&refs, &filtered(0)).is_err());
    assert!(Evaluator::new(&[vec![f64::NAN; 100]], &cfg).is_err());
    // a silent estimate has no target energy at all
    let d = decompose(&[0.0; 100], &refs, 0, &cfg).unwrap();
    assert_eq!(d.sdr(), -METRIC_CAP_DB);
}
