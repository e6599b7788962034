//! Named parameter storage shared by every model in the crate.
//!
//! Values are held as `f64` so gradient checks can perturb them finely, but
//! trained weights are kept on the `f32` grid (see [`ParamStore::round_to_f32`])
//! so a checkpoint round trip is lossless.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// How a freshly registered parameter is filled.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let len: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; len],
            Init::Ones => vec![1.0; len],
            Init::Normal(std) => {
                let normal = Normal::new(0.0, std).expect("finite std");
                (0..len).map(|_| normal.sample(rng) as f32 as f64).collect()
            }
        };
        self.params.push(Param {
            name: name.into(),
            shape: shape.to_vec(),
            data,
            grad: vec![0.0; len],
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            for v in &mut p.data {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Overwrite every value with fresh normal noise. Used by gradient checks,
    /// where the tiny default init makes relative errors meaningless.
    pub fn randomize<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) {
        let normal = Normal::new(0.0, std).expect("finite std");
        for p in &mut self.params {
            for v in &mut p.data {
                *v = normal.sample(rng);
            }
        }
    }

    pub fn set_data(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        let p = &mut self.params[id.0];
        if p.shape != shape || p.data.len() != data.len() {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: expected shape {:?}, found {:?}",
                p.shape, shape
            )));
        }
        p.data = data;
        Ok(())
    }
}
