//! Central finite-difference checks of the analytic gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;
use crate::seed::{rng, Stream};

pub const FD_STEP: f64 = 1e-5;
pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;

/// Norm-wise relative error `|a - n| / max(|a|, |n|)` between two gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt());
    if scale < 1e-300 {
        diff
    } else {
        diff / scale
    }
}

/// Compares reverse-mode gradients of the scalar `f(inputs)` with central
/// differences for every input, returning the worst relative error.
pub fn check<F>(inputs: &[Tensor], f: F, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x.clone(), false)).collect();
        let o = f(&mut t, &vs)?;
        t.value(o).item()
    };

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = vec![0.0; inputs[i].numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - step;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            *slot = (plus - minus) / (2.0 * step);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Outcome of one primitive's check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub primitive: &'static str,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }
}

fn uniform(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so ReLU kinks sit outside the FD stencil.
fn away_from_zero(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = uniform(r, shape, 0.05, 1.0);
    for v in t.data_mut() {
        if r.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// Contracts an output with fixed random weights so every output element
/// contributes a distinct amount to the checked scalar.
fn weighted_sum(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let p = tape.mul(out, w)?;
    Ok(tape.sum(p))
}

type Case = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

/// Builds one randomized instance of every recorded primitive.
fn cases(seed: u64) -> Vec<Case> {
    let mut r = rng(seed, Stream::Bench, 0x6ead);
    let mut cases: Vec<Case> = Vec::new();

    for (name, sh, sw) in [("conv2d_circular", 1, 1), ("conv2d_circular_strided", 2, 2)] {
        let x = uniform(&mut r, &[2, 4, 6], -1.0, 1.0);
        let k = uniform(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
        let b = uniform(&mut r, &[3], -1.0, 1.0);
        let out_shape = [3, 4usize.div_ceil(sh), 6 / sw];
        let wts = uniform(&mut r, &out_shape, -1.0, 1.0);
        cases.push((
            name,
            vec![x, k, b],
            Box::new(move |t, v| {
                let y = t.conv2d_circular(v[0], v[1], Some(v[2]), sh, sw)?;
                weighted_sum(t, y, &wts)
            }),
        ));
    }

    {
        let x = uniform(&mut r, &[3, 4, 6], -1.0, 1.0);
        let g = uniform(&mut r, &[3], 0.5, 1.5);
        let b = uniform(&mut r, &[3], -0.5, 0.5);
        let wts = uniform(&mut r, &[3, 4, 6], -1.0, 1.0);
        cases.push((
            "instance_norm_affine",
            vec![x, g, b],
            Box::new(move |t, v| {
                let y = t.instance_norm_affine(v[0], v[1], v[2])?;
                weighted_sum(t, y, &wts)
            }),
        ));
    }

    {
        let x = away_from_zero(&mut r, &[2, 3, 4]);
        let wts = uniform(&mut r, &[2, 3, 4], -1.0, 1.0);
        cases.push((
            "relu",
            vec![x],
            Box::new(move |t, v| {
                let y = t.relu(v[0]);
                weighted_sum(t, y, &wts)
            }),
        ));
    }

    {
        let x = uniform(&mut r, &[2, 5], -2.0, 2.0);
        let wts = uniform(&mut r, &[2, 5], -1.0, 1.0);
        cases.push((
            "sigmoid",
            vec![x.clone()],
            Box::new({
                let wts = wts.clone();
                move |t, v| {
                    let y = t.sigmoid(v[0]);
                    weighted_sum(t, y, &wts)
                }
            }),
        ));
        cases.push((
            "softmax_rows",
            vec![x],
            Box::new(move |t, v| {
                let y = t.softmax_rows(v[0])?;
                weighted_sum(t, y, &wts)
            }),
        ));
    }

    {
        let x = uniform(&mut r, &[5], -1.0, 1.0);
        let w = uniform(&mut r, &[4, 5], -1.0, 1.0);
        let b = uniform(&mut r, &[4], -1.0, 1.0);
        let wts = uniform(&mut r, &[4], -1.0, 1.0);
        cases.push((
            "linear",
            vec![x, w, b],
            Box::new(move |t, v| {
                let y = t.linear(v[0], v[1], v[2])?;
                weighted_sum(t, y, &wts)
            }),
        ));
    }

    {
        let x = uniform(&mut r, &[3, 4], -1.0, 1.0);
        let wts = uniform(&mut r, &[3, 4], -1.0, 1.0);
        cases.push((
            "l2_normalize_rows",
            vec![x],
            Box::new(move |t, v| {
                let y = t.l2_normalize_rows(v[0])?;
                weighted_sum(t, y, &wts)
            }),
        ));
        let x = uniform(&mut r, &[6], -1.0, 1.0);
        let wts = uniform(&mut r, &[6], -1.0, 1.0);
        cases.push((
            "l2_normalize",
            vec![x],
            Box::new(move |t, v| {
                let y = t.l2_normalize(v[0]);
                weighted_sum(t, y, &wts)
            }),
        ));
    }

    for (name, heads) in [("azimuth_attention", 1usize), ("azimuth_attention_2head", 2)] {
        let q = uniform(&mut r, &[4, 3, 5], -1.0, 1.0);
        let k = uniform(&mut r, &[4, 2, 5], -1.0, 1.0);
        let v = uniform(&mut r, &[4, 2, 5], -1.0, 1.0);
        let wts = uniform(&mut r, &[4, 3, 5], -1.0, 1.0);
        cases.push((
            name,
            vec![q, k, v],
            Box::new(move |t, vs| {
                let y = t.azimuth_attention(vs[0], vs[1], vs[2], heads)?;
                weighted_sum(t, y, &wts)
            }),
        ));
    }

    {
        let x = uniform(&mut r, &[3, 6], -1.0, 1.0);
        let a = uniform(&mut r, &[6, 2], 0.0, 1.0);
        let c = uniform(&mut r, &[2, 3], -0.5, 0.5);
        let wts = uniform(&mut r, &[2, 3], -1.0, 1.0);
        cases.push((
            "vlad_aggregate",
            vec![x, a, c],
            Box::new(move |t, v| {
                let y = t.vlad_aggregate(v[0], v[1], v[2])?;
                weighted_sum(t, y, &wts)
            }),
        ));
    }

    {
        let x = uniform(&mut r, &[2, 3, 4], -1.0, 1.0);
        let y = uniform(&mut r, &[2, 1, 3], -1.0, 1.0);
        let wts_pool = uniform(&mut r, &[2, 1, 7], -1.0, 1.0);
        cases.push((
            "mean_h_concat_w",
            vec![x, y],
            Box::new(move |t, v| {
                let p = t.mean_h(v[0])?;
                let c = t.concat_w(&[p, v[1]])?;
                weighted_sum(t, c, &wts_pool)
            }),
        ));
        let m = uniform(&mut r, &[3, 4], -1.0, 1.0);
        let wts_t = uniform(&mut r, &[4, 3], -1.0, 1.0);
        cases.push((
            "transpose_reshape",
            vec![m],
            Box::new(move |t, v| {
                let flat = t.reshape(v[0], &[2, 6])?;
                let back = t.reshape(flat, &[3, 4])?;
                let tr = t.transpose(back)?;
                weighted_sum(t, tr, &wts_t)
            }),
        ));
    }

    {
        let a = uniform(&mut r, &[5], -1.0, 1.0);
        let b = uniform(&mut r, &[5], -1.0, 1.0);
        cases.push((
            "elementwise_arith",
            vec![a.clone(), b.clone()],
            Box::new(|t, v| {
                let p = t.mul(v[0], v[1])?;
                let d = t.sub(p, v[0])?;
                let s = t.scale(d, 1.7);
                let q = t.add_scalar(s, 0.3);
                let e = t.add(q, v[1])?;
                let sq = t.mul(e, e)?;
                Ok(t.sum(sq))
            }),
        ));
        cases.push(("distance", vec![a, b], Box::new(|t, v| t.distance(v[0], v[1]))));
    }

    cases
}

/// Runs the finite-difference check for every primitive.
pub fn check_primitives(seed: u64) -> Result<Vec<GradCheckReport>> {
    cases(seed)
        .into_iter()
        .map(|(primitive, inputs, f)| {
            Ok(GradCheckReport {
                primitive,
                max_relative_error: check(&inputs, f, FD_STEP)?,
                tolerance: PRIMITIVE_TOLERANCE,
            })
        })
        .collect()
}
