use std::collections::BTreeMap;

use rand::Rng;

use super::config::NetConfig;
use super::forward::forward;
use super::weights::{NetworkWeights, ParamVars};
use crate::engine::gradcheck::{check, FD_STEP};
use crate::engine::{Tape, Tensor, Var};
use crate::error::Result;
use crate::seed::{rng, Stream};

pub const NETWORK_TOLERANCE: f64 = 1e-5;

/// Worst relative gradient error for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradCheck {
    pub name: String,
    pub max_relative_error: f64,
}

/// Finite-difference check of the whole network, one parameter tensor at
/// a time, on random `height x width` inputs. The scalar under test is the
/// descriptor's distance to a fixed random unit target.
pub fn check_network_gradients(cfg: &NetConfig, height: usize, width: usize, seed: u64) -> Result<Vec<ParamGradCheck>> {
    let weights = NetworkWeights::init(cfg)?;
    let mut r = rng(seed, Stream::Noise, 0);
    let mut random = |shape: &[usize]| -> Result<Tensor> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| r.random_range(0.0..1.0)).collect())
    };
    let riv = random(&[cfg.riv_channels, height, width])?;
    let bev = random(&[cfg.bev_channels, height, width])?;
    let mut target = random(&[cfg.descriptor_dim])?;
    let norm = target.norm();
    target.data_mut().iter_mut().for_each(|v| *v /= norm);
    let all: BTreeMap<String, Tensor> = weights.iter().map(|(k, v)| (k.clone(), v.clone())).collect();

    let mut out = Vec::new();
    for name in all.keys() {
        let f = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
            let fixed: BTreeMap<String, Var> = all
                .iter()
                .map(|(k, v)| (k.clone(), if k == name { vars[0] } else { tape.constant(v.clone()) }))
                .collect();
            let p = ParamVars::from_map(fixed);
            let y = forward(tape, &p, cfg, &riv, &bev)?;
            let t = tape.constant(target.clone());
            tape.distance(y, t)
        };
        let err = check(std::slice::from_ref(&all[name]), f, FD_STEP)?;
        out.push(ParamGradCheck { name: name.clone(), max_relative_error: err });
    }
    Ok(out)
}
