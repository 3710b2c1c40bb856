use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, Real, Tensor, Var};

/// Named tensors in a stable (lexicographic) order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T: Real = f32> {
    map: BTreeMap<ParamId, Tensor<T>>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        ParamSet { map: BTreeMap::new() }
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor<T>) {
        self.map.insert(ParamId::new(name), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.map.get(&ParamId::new(name))
    }

    pub fn get_mut(&mut self, id: &ParamId) -> Option<&mut Tensor<T>> {
        self.map.get_mut(id)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.map.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamId, &Tensor<T>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&ParamId, &mut Tensor<T>)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar values.
    pub fn count(&self) -> usize {
        self.map.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(Tensor::all_finite)
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            map: self.map.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    pub fn map_values(&self, f: impl Fn(&Tensor<T>) -> Tensor<T>) -> Self {
        ParamSet {
            map: self.map.iter().map(|(k, v)| (k.clone(), f(v))).collect(),
        }
    }

    /// Record every tensor on `g`, as differentiable parameters when
    /// `trainable` and as constants otherwise.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Result<Bound> {
        let mut vars = BTreeMap::new();
        for (id, t) in &self.map {
            let v = if trainable {
                g.param(id.clone(), t.clone())?
            } else {
                g.constant(t.clone())
            };
            vars.insert(id.clone(), v);
        }
        Ok(Bound { vars })
    }
}

/// Graph handles for a bound [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<ParamId, Var>,
}

impl Bound {
    /// Handles recorded elsewhere, e.g. when a caller binds tensors itself.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (ParamId, Var)>) -> Self {
        Bound {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(&ParamId::new(name))
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }
}

pub(crate) fn gaussian<T: Real>(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor<T> {
    let normal = Normal::new(0.0, std).expect("std must be finite and positive");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(normal.sample(rng))).collect();
    Tensor::from_parts(shape.to_vec(), data)
}
