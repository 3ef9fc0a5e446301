//! Max pooling over time steps and over a set of equal-shape tensors.
//! Ties go to the lowest index.

use ndarray::Array2;

use super::Scalar;
use crate::error::{Error, Result};

/// Winner index per output element.
#[derive(Clone, Debug)]
pub struct ArgMax {
    index: Array2<usize>,
    count: usize,
}

/// Element-wise max over `states[t]` for `t < lens[row]`.
pub fn maxpool_time<F: Scalar>(states: &[Array2<F>], lens: &[usize]) -> Result<(Array2<F>, ArgMax)> {
    let steps = states.len();
    let Some(first) = states.first() else {
        return Err(Error::InvalidArgument("max-pool over zero time steps".into()));
    };
    let (b, d) = first.dim();
    if lens.len() != b {
        return Err(Error::DimensionMismatch {
            expected: b,
            got: lens.len(),
            context: "max-pool lengths".into(),
        });
    }
    let mut out = first.clone();
    let mut index = Array2::zeros((b, d));
    for (r, &len) in lens.iter().enumerate() {
        if len == 0 || len > steps {
            return Err(Error::InvalidArgument(format!("length {len} outside 1..={steps}")));
        }
        for (t, st) in states.iter().enumerate().take(len).skip(1) {
            for j in 0..d {
                if st[[r, j]] > out[[r, j]] {
                    out[[r, j]] = st[[r, j]];
                    index[[r, j]] = t;
                }
            }
        }
    }
    Ok((out, ArgMax { index, count: steps }))
}

/// Routes each output gradient to its winning time step.
pub fn maxpool_time_backward<F: Scalar>(arg: &ArgMax, d_out: &Array2<F>) -> Vec<Array2<F>> {
    scatter(arg, d_out)
}

/// Element-wise max across `inputs`, all of one shape.
pub fn maxpool_elem<F: Scalar>(inputs: &[&Array2<F>]) -> Result<(Array2<F>, ArgMax)> {
    let Some(first) = inputs.first() else {
        return Err(Error::InvalidArgument("max-pool over zero inputs".into()));
    };
    let dim = first.dim();
    let mut out = (*first).clone();
    let mut index = Array2::zeros(dim);
    for (k, v) in inputs.iter().enumerate().skip(1) {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim.1,
                got: v.ncols(),
                context: "element-wise max-pool".into(),
            });
        }
        ndarray::Zip::from(&mut out)
            .and(&mut index)
            .and(*v)
            .for_each(|o, i, &x| {
                if x > *o {
                    *o = x;
                    *i = k;
                }
            });
    }
    Ok((
        out,
        ArgMax {
            index,
            count: inputs.len(),
        },
    ))
}

pub fn maxpool_elem_backward<F: Scalar>(arg: &ArgMax, d_out: &Array2<F>) -> Vec<Array2<F>> {
    scatter(arg, d_out)
}

fn scatter<F: Scalar>(arg: &ArgMax, d_out: &Array2<F>) -> Vec<Array2<F>> {
    let mut grads = vec![Array2::zeros(d_out.raw_dim()); arg.count];
    for ((r, j), &k) in arg.index.indexed_iter() {
        grads[k][[r, j]] = d_out[[r, j]];
    }
    grads
}
