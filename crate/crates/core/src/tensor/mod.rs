//! A small reverse-mode autodiff kernel covering exactly the layers the
//! CNN extractors use. Single-sample forward passes; batching is done by
//! accumulating gradients across samples.

mod adam;
mod tape;

pub use adam::Adam;
pub use tape::{Tape, Var};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const PROB_CLIP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// U(-a, a)
    Uniform(f64),
    /// U(-sqrt(6/fan_in), sqrt(6/fan_in))
    HeUniform {
        fan_in: usize,
    },
}

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut ChaCha8Rng) -> ParamId {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Uniform(a) => (0..n).map(|_| rng.gen_range(-a..a)).collect(),
            Init::HeUniform { fan_in } => {
                let a = (6.0 / fan_in.max(1) as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-a..a)).collect()
            }
        };
        self.insert(
            name,
            Tensor {
                shape: shape.to_vec(),
                data,
            },
        )
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> ParamId {
        self.names.push(name.to_string());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            tensors: self.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
        }
    }

    /// Rounds every value through f32, so a save/load cycle is exact.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Names, shapes, then little-endian f32 values.
    pub fn write_to(&self, w: &mut Writer) {
        w.usize(self.tensors.len());
        for (name, t) in self.names.iter().zip(&self.tensors) {
            w.str(name);
            w.usize(t.shape.len());
            for &d in &t.shape {
                w.usize(d);
            }
            for &v in &t.data {
                w.f32(v as f32);
            }
        }
    }

    pub fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.len(1)?;
        let mut store = ParamStore::new();
        for _ in 0..n {
            let name = r.str()?;
            let rank = r.len(8)?;
            let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let mut data = Vec::with_capacity(count.min(1 << 24));
            for _ in 0..count {
                data.push(r.f32()? as f64);
            }
            store.insert(&name, Tensor::new(shape, data)?);
        }
        Ok(store)
    }

    /// Same names and shapes, in the same order.
    pub fn check_layout(&self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Shape("parameter names differ".into()));
        }
        for (i, (a, b)) in self.tensors.iter().zip(&other.tensors).enumerate() {
            if a.shape != b.shape {
                return Err(Error::Shape(format!(
                    "{}: expected {:?}, got {:?}",
                    self.names[i], a.shape, b.shape
                )));
            }
        }
        Ok(())
    }
}

/// Gradient buffers parallel to a `ParamStore`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub tensors: Vec<Tensor>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn clear(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `-ln(max(p[label], 1e-15))`
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_CLIP).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let p = softmax(&[1000.0, -1000.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn certain_prediction_has_tiny_loss() {
        assert!(cross_entropy(&[1.0, 0.0], 0) <= 3.5e-15);
        assert!((cross_entropy(&[0.0, 1.0], 0) - 1e15f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn store_roundtrip_after_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        s.add("w", &[3, 4], Init::HeUniform { fan_in: 3 }, &mut rng);
        s.add("b", &[4], Init::Zeros, &mut rng);
        s.round_to_f32();
        let mut w = Writer::new(b"TESTSTOR", 1);
        s.write_to(&mut w);
        let bytes = w.finish();
        let mut r = Reader::open(&bytes, b"TESTSTOR", &[1]).unwrap();
        let back = ParamStore::read_from(&mut r).unwrap();
        r.expect_end().unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn he_uniform_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        let id = s.add("w", &[100, 10], Init::HeUniform { fan_in: 24 }, &mut rng);
        let a = (6.0f64 / 24.0).sqrt();
        assert!(s.get(id).data.iter().all(|v| v.abs() < a));
    }

    #[test]
    fn bad_shape_rejected() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }
}
