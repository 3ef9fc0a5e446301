use ndarray::{Array2, ArrayView2};

use super::{Init, Module, Parameter, Scalar};
use crate::error::{Error, Result};

/// Row lookup table.
#[derive(Clone, Debug)]
pub struct Embedding<F> {
    pub table: Parameter<F>,
}

impl<F: Scalar> Embedding<F> {
    /// Rows initialized from N(0, 0.1).
    pub fn new(name: &str, rows: usize, dim: usize, init: &mut Init) -> Self {
        Embedding {
            table: Parameter::new(format!("{name}.table"), init.normal(rows, dim, 0.1)),
        }
    }

    pub fn rows(&self) -> usize {
        self.table.value.nrows()
    }

    pub fn dim(&self) -> usize {
        self.table.value.ncols()
    }

    /// Returns one row per id, `[ids.len() × dim]`.
    pub fn forward(&self, ids: &[u32]) -> Result<Array2<F>> {
        let rows = self.rows();
        let mut out = Array2::zeros((ids.len(), self.dim()));
        for (r, &id) in ids.iter().enumerate() {
            let id = id as usize;
            if id >= rows {
                return Err(Error::IdOutOfRange { id, rows });
            }
            out.row_mut(r).assign(&self.table.value.row(id));
        }
        Ok(out)
    }

    pub fn backward(&mut self, ids: &[u32], d_out: ArrayView2<F>) {
        for (r, &id) in ids.iter().enumerate() {
            let mut g = self.table.grad.row_mut(id as usize);
            g += &d_out.row(r);
        }
    }
}

impl<F: Scalar> Module<F> for Embedding<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.table]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.table]
    }
}
