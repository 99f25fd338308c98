use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::{BnParams, BN_EPSILON};
use crate::error::{shape_err, Error, Result};
use crate::graph::spec::{ConvLayer, GraphSpec, LinearLayer};
use crate::tensor::ConvWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl WeightEntry {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return shape_err(format!("shape {shape:?} does not hold {} values", data.len()));
        }
        Ok(Self { shape, data })
    }
}

/// What a stored array is used for; drives initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryRole {
    /// Kernel or dense matrix with its Xavier fans.
    Weight { fan_in: usize, fan_out: usize },
    Bias,
    BnGamma,
    BnBeta,
    BnMean,
    BnVar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: EntryRole,
}

pub(crate) fn conv_entries(l: &ConvLayer) -> Vec<ExpectedEntry> {
    let s = &l.spec;
    let (kh, kw) = s.kernel;
    let mut v = vec![ExpectedEntry {
        name: format!("{}.weight", l.name),
        shape: vec![s.out_ch, s.in_per_group(), kh, kw],
        role: EntryRole::Weight {
            fan_in: s.in_per_group() * kh * kw,
            fan_out: s.out_per_group() * kh * kw,
        },
    }];
    if s.has_bias {
        v.push(ExpectedEntry {
            name: format!("{}.bias", l.name),
            shape: vec![s.out_ch],
            role: EntryRole::Bias,
        });
    }
    if l.bn {
        for (suffix, role) in [
            ("gamma", EntryRole::BnGamma),
            ("beta", EntryRole::BnBeta),
            ("mean", EntryRole::BnMean),
            ("var", EntryRole::BnVar),
        ] {
            v.push(ExpectedEntry {
                name: format!("{}.bn.{suffix}", l.name),
                shape: vec![s.out_ch],
                role,
            });
        }
    }
    v
}

pub(crate) fn linear_entries(l: &LinearLayer) -> Vec<ExpectedEntry> {
    vec![
        ExpectedEntry {
            name: format!("{}.weight", l.name),
            shape: vec![l.out_features, l.in_features],
            role: EntryRole::Weight {
                fan_in: l.in_features,
                fan_out: l.out_features,
            },
        },
        ExpectedEntry {
            name: format!("{}.bias", l.name),
            shape: vec![l.out_features],
            role: EntryRole::Bias,
        },
    ]
}

impl GraphSpec {
    /// Every stored array of the full training graph, in graph order.
    pub fn expected_entries(&self) -> Vec<ExpectedEntry> {
        let mut v: Vec<ExpectedEntry> = self.conv_layers().into_iter().flat_map(conv_entries).collect();
        v.extend(self.linear_layers().into_iter().flat_map(linear_entries));
        v
    }

    /// Arrays needed by the on-device subgraph (encoder, decoder, primary
    /// heatmaps, visibility).
    pub fn inference_entries(&self) -> Vec<ExpectedEntry> {
        let mut v: Vec<ExpectedEntry> = self.inference_conv_layers().into_iter().flat_map(conv_entries).collect();
        v.extend(linear_entries(&self.heads.visibility));
        v
    }
}

/// Named weight arrays in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    pub entries: IndexMap<String, WeightEntry>,
    /// Hash of the network config the store was initialised for.
    pub config_hash: Option<u64>,
    pub seed: Option<u64>,
}

impl WeightStore {
    pub fn insert(&mut self, name: impl Into<String>, entry: WeightEntry) {
        self.entries.insert(name.into(), entry);
    }

    pub fn get(&self, name: &str) -> Result<&WeightEntry> {
        self.entries.get(name).ok_or_else(|| Error::MissingWeights(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut WeightEntry> {
        self.entries.get_mut(name).ok_or_else(|| Error::MissingWeights(name.to_string()))
    }

    fn shaped(&self, name: &str, shape: &[usize]) -> Result<&WeightEntry> {
        let e = self.get(name)?;
        if e.shape != shape {
            return shape_err(format!("`{name}` has shape {:?}, expected {shape:?}", e.shape));
        }
        Ok(e)
    }

    pub fn conv_weights(&self, l: &ConvLayer) -> Result<ConvWeights> {
        let s = &l.spec;
        let e = self.shaped(&format!("{}.weight", l.name), &[s.out_ch, s.in_per_group(), s.kernel.0, s.kernel.1])?;
        ConvWeights::new(s.out_ch, s.in_per_group(), s.kernel.0, s.kernel.1, e.data.clone())
    }

    pub fn conv_bias(&self, l: &ConvLayer) -> Result<Option<Vec<f32>>> {
        if !l.spec.has_bias {
            return Ok(None);
        }
        Ok(Some(self.shaped(&format!("{}.bias", l.name), &[l.spec.out_ch])?.data.clone()))
    }

    pub fn bn(&self, l: &ConvLayer) -> Result<Option<BnParams>> {
        if !l.bn {
            return Ok(None);
        }
        let c = l.spec.out_ch;
        let get = |s: &str| -> Result<Vec<f32>> { Ok(self.shaped(&format!("{}.bn.{s}", l.name), &[c])?.data.clone()) };
        Ok(Some(BnParams {
            gamma: get("gamma")?,
            beta: get("beta")?,
            running_mean: get("mean")?,
            running_var: get("var")?,
            epsilon: BN_EPSILON,
        }))
    }

    /// `(weights out x in, bias)`.
    pub fn linear(&self, l: &LinearLayer) -> Result<(&[f32], &[f32])> {
        let w = self.shaped(&format!("{}.weight", l.name), &[l.out_features, l.in_features])?;
        let b = self.shaped(&format!("{}.bias", l.name), &[l.out_features])?;
        Ok((&w.data, &b.data))
    }

    /// Checks that every array of `expected` is present with its shape.
    pub fn check_entries(&self, expected: &[ExpectedEntry]) -> Result<()> {
        for e in expected {
            self.shaped(&e.name, &e.shape)?;
        }
        Ok(())
    }

    /// Copy restricted to the on-device arrays.
    pub fn inference_subset(&self, g: &GraphSpec) -> Result<WeightStore> {
        let mut out = WeightStore {
            config_hash: self.config_hash,
            seed: self.seed,
            ..Default::default()
        };
        for e in g.inference_entries() {
            out.insert(e.name.clone(), self.shaped(&e.name, &e.shape)?.clone());
        }
        Ok(out)
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|e| e.data.len()).sum()
    }

    /// Same layout, every value zero.
    pub fn zeroed(&self) -> WeightStore {
        let mut z = self.clone();
        z.entries.values_mut().for_each(|e| e.data.fill(0.0));
        z
    }
}

/// Deterministic initialisation: kernels and dense matrices uniform in
/// `+-sqrt(6 / (fan_in + fan_out))`, biases zero, batch norm identity.
pub fn init_weights(g: &GraphSpec, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = WeightStore {
        config_hash: Some(g.config.hash()),
        seed: Some(seed),
        ..Default::default()
    };
    for e in g.expected_entries() {
        let n: usize = e.shape.iter().product();
        let data = match e.role {
            EntryRole::Weight { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
            }
            EntryRole::Bias | EntryRole::BnBeta | EntryRole::BnMean => vec![0.0; n],
            EntryRole::BnGamma | EntryRole::BnVar => vec![1.0; n],
        };
        ws.insert(e.name, WeightEntry { shape: e.shape, data });
    }
    ws
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetworkConfig;
    use crate::graph::spec::build_graph;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let g = build_graph(&NetworkConfig::default()).unwrap();
        assert_eq!(init_weights(&g, 7), init_weights(&g, 7));
        assert_ne!(init_weights(&g, 7).entries, init_weights(&g, 8).entries);
    }

    #[test]
    fn xavier_bounds_and_bn_identity() {
        let g = build_graph(&NetworkConfig::default()).unwrap();
        let ws = init_weights(&g, 1);
        let w = ws.get("tier1.conv.weight").unwrap();
        let limit = (6.0f32 / (9.0 + 16.0 * 9.0)).sqrt();
        assert!(w.data.iter().all(|v| v.abs() <= limit));
        assert!(w.data.iter().any(|v| v.abs() > limit / 2.0));
        assert!(ws.get("tier1.conv.bn.gamma").unwrap().data.iter().all(|&v| v == 1.0));
        assert!(ws.get("tier1.conv.bn.mean").unwrap().data.iter().all(|&v| v == 0.0));
        assert!(ws.get("heads.primary.bias").unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn accessors_check_shapes() {
        let g = build_graph(&NetworkConfig::default()).unwrap();
        let mut ws = init_weights(&g, 1);
        let layer = &g.tiers[0].units[0].blocks[0].convs[0];
        assert!(ws.conv_weights(layer).is_ok());
        ws.get_mut("tier1.conv.weight").unwrap().shape = vec![16, 1, 9, 1];
        assert!(matches!(ws.conv_weights(layer), Err(Error::Shape(_))));
        ws.entries.shift_remove("tier1.conv.weight");
        assert!(matches!(ws.conv_weights(layer), Err(Error::MissingWeights(_))));
        assert!(ws.check_entries(&g.expected_entries()).is_err());
    }

    #[test]
    fn inference_subset_drops_training_heads() {
        let g = build_graph(&NetworkConfig::default()).unwrap();
        let ws = init_weights(&g, 1);
        let sub = ws.inference_subset(&g).unwrap();
        assert!(sub.get("heads.visibility.weight").is_ok());
        assert!(sub.get("aux.stage0.weight").is_err());
        assert!(sub.get("seg.fuse.weight").is_err());
        assert!(sub.scalar_count() < ws.scalar_count());
    }
}
