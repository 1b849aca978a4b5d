use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ChainFactor, CoordinationMdp, Factor, GridFactor, LocalAccessSimulator, Mdp, ProductMdp, StateHandle, TabularMdp};
use crate::features::{AdditiveFeatureMap, OneHotProductMap, TableAdditiveMap};
use crate::{Error, Result};

fn default_agents() -> usize {
    4
}

fn default_p_intended() -> f64 {
    0.95
}

fn default_slip() -> f64 {
    0.1
}

/// Serializable description of an environment together with its features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    /// Independent agents on 3x3 grids with one-hot features.
    Grid4 {
        #[serde(default = "default_agents")]
        agents: usize,
        #[serde(default = "default_p_intended")]
        p_intended: f64,
    },
    /// The two-agent coordination example.
    Coordination,
    /// `factors` independent chains.
    Product {
        factors: usize,
        length: usize,
        #[serde(default = "default_slip")]
        slip: f64,
    },
    /// A single chain.
    Chain {
        length: usize,
        #[serde(default = "default_slip")]
        slip: f64,
    },
}

impl EnvironmentSpec {
    pub fn grid4() -> Self {
        EnvironmentSpec::Grid4 { agents: 4, p_intended: 0.95 }
    }

    pub fn build(&self) -> Result<Environment> {
        let invalid = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        let (mdp, features): Built = match *self {
            EnvironmentSpec::Grid4 { agents, p_intended } => {
                if agents == 0 {
                    return invalid("grid needs at least one agent");
                }
                if !(0.0..=1.0).contains(&p_intended) {
                    return invalid("p_intended must lie in [0, 1]");
                }
                let factors: Vec<Box<dyn Factor>> =
                    (0..agents).map(|_| Box::new(GridFactor::standard(p_intended)) as Box<dyn Factor>).collect();
                let product = ProductMdp::new(factors);
                let map = OneHotProductMap::for_product(&product);
                (Arc::new(product), Arc::new(map))
            }
            EnvironmentSpec::Coordination => (Arc::new(CoordinationMdp), Arc::new(TableAdditiveMap::coordination())),
            EnvironmentSpec::Product { factors, length, slip } => chains(factors, length, slip)?,
            EnvironmentSpec::Chain { length, slip } => chains(1, length, slip)?,
        };
        Ok(Environment { spec: self.clone(), mdp, features })
    }
}

type Built = (Arc<dyn TabularMdp>, Arc<dyn AdditiveFeatureMap>);

fn chains(factors: usize, length: usize, slip: f64) -> Result<Built> {
    if factors == 0 || length == 0 {
        return Err(Error::InvalidParameter("chains need at least one factor and one state".into()));
    }
    if !(0.0..=1.0).contains(&slip) {
        return Err(Error::InvalidParameter("slip must lie in [0, 1]".into()));
    }
    let product =
        ProductMdp::new((0..factors).map(|_| Box::new(ChainFactor { length, slip }) as Box<dyn Factor>).collect());
    let map = OneHotProductMap::for_product(&product);
    Ok((Arc::new(product), Arc::new(map)))
}

/// A built environment: the MDP and its additive feature map.
#[derive(Debug, Clone)]
pub struct Environment {
    pub spec: EnvironmentSpec,
    pub mdp: Arc<dyn TabularMdp>,
    pub features: Arc<dyn AdditiveFeatureMap>,
}

impl Environment {
    pub fn simulator(&self, seed: u64) -> LocalAccessSimulator {
        let mdp: Arc<dyn Mdp> = self.mdp.clone();
        LocalAccessSimulator::new(mdp, seed)
    }
}

/// Builds the environment and returns a fresh simulator with the handle of
/// the initial state.
pub fn reset(spec: &EnvironmentSpec, seed: u64) -> Result<(LocalAccessSimulator, StateHandle)> {
    let mut sim = spec.build()?.simulator(seed);
    let h = sim.reset();
    Ok((sim, h))
}
