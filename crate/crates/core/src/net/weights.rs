use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::NetConfig;
use crate::engine::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed::{rng, Stream};

pub(crate) const VIEWS: [&str; 2] = ["riv", "bev"];

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    Ones,
    Zeros,
    /// Standard normal times the factor.
    Normal(f64),
}

/// Every parameter's name, shape, and initializer, in creation order.
fn parameter_specs(cfg: &NetConfig) -> Vec<(String, Vec<usize>, Init)> {
    let k = cfg.kernel_size;
    let ds = cfg.shared_dim();
    let mut specs = Vec::new();
    for (v, view) in VIEWS.iter().enumerate() {
        let mut c_in = if v == 0 { cfg.riv_channels } else { cfg.bev_channels };
        for (i, &c) in cfg.channels.iter().enumerate() {
            specs.push((format!("{view}.block{i}.conv.weight"), vec![c, c_in, k, k], Init::FanIn(c_in * k * k)));
            specs.push((format!("{view}.block{i}.norm.gamma"), vec![c], Init::Ones));
            specs.push((format!("{view}.block{i}.norm.beta"), vec![c], Init::Zeros));
            c_in = c;
        }
    }
    for (i, &c) in cfg.channels.iter().enumerate() {
        let hidden = c * cfg.ffn_expansion;
        for dir in VIEWS {
            for proj in ["q", "k", "v"] {
                specs.push((format!("fuse{i}.{dir}.{proj}.weight"), vec![c, c, 1, 1], Init::FanIn(c)));
                // A key bias shifts every logit in a column equally, so softmax cancels it.
                if proj != "k" {
                    specs.push((format!("fuse{i}.{dir}.{proj}.bias"), vec![c], Init::FanIn(c)));
                }
            }
            specs.push((format!("fuse{i}.{dir}.ffn1.weight"), vec![hidden, c, 1, 1], Init::FanIn(c)));
            specs.push((format!("fuse{i}.{dir}.ffn1.bias"), vec![hidden], Init::FanIn(c)));
            specs.push((format!("fuse{i}.{dir}.ffn2.weight"), vec![c, hidden, 1, 1], Init::FanIn(hidden)));
            specs.push((format!("fuse{i}.{dir}.ffn2.bias"), vec![c], Init::FanIn(hidden)));
        }
        for view in VIEWS {
            specs.push((format!("pool{i}.{view}.weight"), vec![ds, c, 1, 1], Init::FanIn(c)));
            specs.push((format!("pool{i}.{view}.bias"), vec![ds], Init::FanIn(c)));
        }
    }
    specs.push(("vlad.assign.weight".into(), vec![cfg.clusters, ds, 1, 1], Init::FanIn(ds)));
    specs.push(("vlad.assign.bias".into(), vec![cfg.clusters], Init::Zeros));
    specs.push(("vlad.centers".into(), vec![cfg.clusters, ds], Init::Normal(0.1)));
    let d = cfg.descriptor_dim;
    specs.push(("gate.weight".into(), vec![d, d], Init::FanIn(d)));
    specs.push(("gate.bias".into(), vec![d], Init::Zeros));
    specs
}

/// Named learnable parameters of the fusion network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    params: BTreeMap<String, Tensor>,
}

impl NetworkWeights {
    /// Seeded random initialization.
    pub fn init(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng(cfg.seed, Stream::Init, 0);
        let mut params = BTreeMap::new();
        for (name, shape, init) in parameter_specs(cfg) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = match init {
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    (0..n).map(|_| r.random_range(-bound..bound)).collect()
                }
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
                Init::Normal(scale) => (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        scale * z
                    })
                    .collect(),
            };
            params.insert(name, Tensor::new(&shape, data)?);
        }
        Ok(Self { params })
    }

    /// Builds weights from named tensors, checking them against `cfg`.
    pub fn from_params(cfg: &NetConfig, params: BTreeMap<String, Tensor>) -> Result<Self> {
        cfg.validate()?;
        let specs = parameter_specs(cfg);
        if specs.len() != params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (name, shape, _) in &specs {
            let t = params
                .get(name)
                .ok_or_else(|| Error::Shape(format!("missing parameter {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!("{name}: shape {:?}, expected {shape:?}", t.shape())));
            }
            if !t.is_finite() {
                return Err(Error::Format(format!("{name} holds non-finite values")));
            }
        }
        Ok(Self { params })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn register(&self, tape: &mut Tape, requires_grad: bool) -> ParamVars {
        ParamVars(
            self.params
                .iter()
                .map(|(name, t)| (name.clone(), tape.leaf(t.clone(), requires_grad)))
                .collect(),
        )
    }
}

/// Tape handles of registered parameters.
#[derive(Debug, Clone)]
pub struct ParamVars(BTreeMap<String, Var>);

impl ParamVars {
    pub fn from_map(vars: BTreeMap<String, Var>) -> Self {
        Self(vars)
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::Shape(format!("unknown parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.0.iter()
    }
}
