//! Dense row-major tensors.
//!
//! `TensorOf<F>` is generic over the element type so the same graph code
//! can run in f32 (production) and f64 (finite-difference shadow checks).
//! `Tensor` is the f32 alias used by the model and all stored artifacts.

use num_traits::Float;

use crate::error::{Error, Result};

/// Dense row-major array. Shape `[]` is not used; scalars are `[1]` or `[1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorOf<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

pub type Tensor = TensorOf<f32>;

impl<F: Float> TensorOf<F> {
    /// Construct from external data. Rejects shape/length mismatch and
    /// non-finite entries; values produced inside the graph skip this
    /// check (they derive from validated inputs).
    pub fn from_vec(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("tensor contains NaN or Inf".into()));
        }
        Ok(TensorOf { shape, data })
    }

    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<F>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        TensorOf { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        TensorOf {
            shape,
            data: vec![F::zero(); numel],
        }
    }

    pub fn scalar(v: F) -> Self {
        TensorOf {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    /// Row vector `[1, n]`.
    pub fn row(data: Vec<F>) -> Self {
        TensorOf {
            shape: vec![1, data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows/cols of a 2-D tensor; 1-D tensors are treated as a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => panic!("dims2 on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn item(&self) -> F {
        debug_assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Elementwise cast to another float width.
    pub fn cast<G: Float>(&self) -> TensorOf<G> {
        TensorOf {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| G::from(v).expect("float cast"))
                .collect(),
        }
    }
}

impl Tensor {
    /// Little-endian f32 bytes in row-major order; the checkpoint wire format.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(shape: Vec<usize>, bytes: &[u8]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if bytes.len() != numel * 4 {
            return Err(Error::Data(format!(
                "tensor blob length {} does not match shape {:?}",
                bytes.len(),
                shape
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::from_vec(shape, data)
    }
}
