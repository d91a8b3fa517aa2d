//! Minimal neural-network toolkit: parameter storage, layers and Adam.

mod layers;
mod optim;
pub mod tape;

pub use layers::{Isab, Linear, Lstm, Mab, Pma};
pub use optim::{clip_global_norm, Adam};
pub use tape::{AttnSpec, Mat, Tape, Var};

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Index of a parameter inside a [`Params`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named parameter matrices. Layers refer to entries by [`ParamId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Mat>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, shape: (usize, usize), bound: f64, rng: &mut ChaCha8Rng) -> ParamId {
        let value = Array2::from_shape_fn(shape, |_| rng.random_range(-bound..=bound));
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values_mut(&mut self) -> &mut [Mat] {
        &mut self.values
    }

    /// Total scalar parameter count.
    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Replaces values by name; every stored name must be present with a
    /// matching shape.
    pub fn load(&mut self, named: &[(String, Mat)]) -> Result<(), String> {
        for (i, name) in self.names.iter().enumerate() {
            let (_, v) = named
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| format!("missing parameter {name}"))?;
            if v.dim() != self.values[i].dim() {
                return Err(format!("parameter {name}: shape {:?} != {:?}", v.dim(), self.values[i].dim()));
            }
            self.values[i] = v.clone();
        }
        Ok(())
    }
}

/// One forward pass: the tape, the parameters bound onto it, and the dropout
/// configuration.
pub struct Ctx<'a> {
    pub tape: &'a Tape,
    bound: Vec<Var>,
    train: bool,
    dropout: f64,
    rng: RefCell<ChaCha8Rng>,
}

impl<'a> Ctx<'a> {
    pub fn new(tape: &'a Tape, params: &Params, train: bool, dropout: f64, rng: ChaCha8Rng) -> Self {
        let bound = params.values.iter().map(|v| tape.leaf(v.clone())).collect();
        Self { tape, bound, train, dropout, rng: RefCell::new(rng) }
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.bound[id.0]
    }

    pub fn bound(&self) -> &[Var] {
        &self.bound
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    /// Inverted dropout; identity outside training.
    pub fn dropout(&self, x: Var) -> Var {
        if !self.train || self.dropout <= 0.0 {
            return x;
        }
        let keep = 1.0 - self.dropout;
        let shape = self.tape.shape(x);
        let mut rng = self.rng.borrow_mut();
        let mask = Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
        self.tape.mul_const(x, Rc::new(mask))
    }
}
