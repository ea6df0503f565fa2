//! Test-only oracles shared by the integration tests.
#![allow(dead_code)]

use hgsep_core::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

/// Uniform values whose magnitude is at least `gap`, keeping inputs away
/// from the kink of piecewise-linear ops.
pub fn uniform_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.gen_range(gap..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Max-norm relative error `max|a - n| / max(max|a|, max|n|)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Scalar objective `sum(out * projection)` evaluated without recording.
pub fn projected<F>(build: &F, inputs: &[Tensor<f64>], projection: &Tensor<f64>) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var<f64>]) -> Var<f64>,
{
    let mut tape = Tape::no_grad();
    let vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    out.value()
        .data()
        .iter()
        .zip(projection.data())
        .map(|(a, b)| a * b)
        .sum()
}

/// Compares tape gradients of `sum(build(inputs) * projection)` against
/// central differences for every entry of every input. Returns the worst
/// relative error over inputs.
pub fn check_all_entries<F>(build: F, inputs: &[Tensor<f64>], projection_seed: u64, h: f64) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var<f64>]) -> Var<f64>,
{
    let mut tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let mut r = rng(projection_seed);
    let projection = uniform(&mut r, out.shape(), -1.0, 1.0);
    let grads = tape.backward_with(&out, projection.clone()).unwrap();

    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(&vars[i]);
        let mut numeric = vec![0.0; input.numel()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[k] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[k] -= h;
            *slot = (projected(&build, &plus, &projection) - projected(&build, &minus, &projection))
                / (2.0 * h);
        }
        worst = worst.max(relative_error(analytic.data(), &numeric));
    }
    worst
}

/// Finite-difference check of a network-style computation over named
/// tensors. `build` maps bound tensors to an output; its gradient is taken
/// against a fixed random projection (or 1 for scalar outputs). Up to
/// `per_tensor` randomly chosen entries of every tensor are perturbed.
/// Returns `(name, relative error)` per tensor.
pub fn check_named<F>(
    tensors: &hgsep_core::Params<f64>,
    build: F,
    per_tensor: usize,
    seed: u64,
    h: f64,
) -> Vec<(String, f64)>
where
    F: Fn(&mut Tape<f64>, &hgsep_core::model::BoundParams<f64>) -> Var<f64>,
{
    let mut tape = Tape::new();
    let bound = tensors.bind(&mut tape);
    let out = build(&mut tape, &bound);
    let mut r = rng(seed);
    let projection = if out.value().numel() == 1 {
        Tensor::full(out.shape().to_vec(), 1.0)
    } else {
        uniform(&mut r, out.shape(), -1.0, 1.0)
    };
    let grads = tape.backward_with(&out, projection.clone()).unwrap();
    let eval = |p: &hgsep_core::Params<f64>| -> f64 {
        let mut tape = Tape::no_grad();
        let bound = p.bind(&mut tape);
        let out = build(&mut tape, &bound);
        out.value()
            .data()
            .iter()
            .zip(projection.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let names: Vec<String> = tensors.names().map(str::to_string).collect();
    names
        .into_iter()
        .map(|name| {
            let analytic_full = grads.wrt(bound.get(&name).unwrap());
            let n = analytic_full.numel();
            let picks: Vec<usize> = if n <= per_tensor {
                (0..n).collect()
            } else {
                rand::seq::index::sample(&mut r, n, per_tensor).into_vec()
            };
            let mut analytic = Vec::new();
            let mut numeric = Vec::new();
            for k in picks {
                let mut plus = tensors.clone();
                plus.get_mut(&name).unwrap().data_mut()[k] += h;
                let mut minus = tensors.clone();
                minus.get_mut(&name).unwrap().data_mut()[k] -= h;
                numeric.push((eval(&plus) - eval(&minus)) / (2.0 * h));
                analytic.push(analytic_full.data()[k]);
            }
            let err = relative_error(&analytic, &numeric);
            (name, err)
        })
        .collect()
}

/// Outcome of [`check_named_smooth`] for one tensor.
#[derive(Debug)]
pub struct SmoothCheck {
    pub name: String,
    pub error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Like [`check_named`], for piecewise-linear computations. An entry whose
/// central differences at `h` and `h / 2` disagree by more than
/// `kink_tol * max|analytic|` has a relu or max-pool switch inside the
/// stencil; it is not differentiable there at that scale and is replaced by
/// another random entry. Reports how many entries were replaced.
pub fn check_named_smooth<F>(
    tensors: &hgsep_core::Params<f64>,
    build: F,
    per_tensor: usize,
    seed: u64,
    h: f64,
    kink_tol: f64,
) -> Vec<SmoothCheck>
where
    F: Fn(&mut Tape<f64>, &hgsep_core::model::BoundParams<f64>) -> Var<f64>,
{
    let mut tape = Tape::new();
    let bound = tensors.bind(&mut tape);
    let out = build(&mut tape, &bound);
    let mut r = rng(seed);
    let projection = if out.value().numel() == 1 {
        Tensor::full(out.shape().to_vec(), 1.0)
    } else {
        uniform(&mut r, out.shape(), -1.0, 1.0)
    };
    let grads = tape.backward_with(&out, projection.clone()).unwrap();
    let eval = |p: &hgsep_core::Params<f64>| -> f64 {
        let mut tape = Tape::no_grad();
        let bound = p.bind(&mut tape);
        let out = build(&mut tape, &bound);
        out.value()
            .data()
            .iter()
            .zip(projection.data())
            .map(|(a, b)| a * b)
            .sum()
    };
    let central = |name: &str, k: usize, step: f64| -> f64 {
        let mut plus = tensors.clone();
        plus.get_mut(name).unwrap().data_mut()[k] += step;
        let mut minus = tensors.clone();
        minus.get_mut(name).unwrap().data_mut()[k] -= step;
        (eval(&plus) - eval(&minus)) / (2.0 * step)
    };

    let names: Vec<String> = tensors.names().map(str::to_string).collect();
    names
        .into_iter()
        .map(|name| {
            let analytic_full = grads.wrt(bound.get(&name).unwrap());
            let scale = analytic_full.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let n = analytic_full.numel();
            let order = rand::seq::index::sample(&mut r, n, n).into_vec();
            let (mut analytic, mut numeric, mut skipped) = (Vec::new(), Vec::new(), 0);
            for k in order {
                if analytic.len() == per_tensor {
                    break;
                }
                let coarse = central(&name, k, h);
                let fine = central(&name, k, h / 2.0);
                if (coarse - fine).abs() > kink_tol * scale {
                    skipped += 1;
                    continue;
                }
                numeric.push(fine);
                analytic.push(analytic_full.data()[k]);
            }
            SmoothCheck {
                error: relative_error(&analytic, &numeric),
                checked: analytic.len(),
                skipped,
                name,
            }
        })
        .collect()
}
