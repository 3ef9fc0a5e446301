use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};

use super::{Init, Module, Parameter, Scalar};
use crate::error::{Error, Result};

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// One LSTM direction. Gate columns are ordered input, forget, candidate,
/// output.
#[derive(Clone, Debug)]
pub struct LstmCell<F> {
    /// `[input × 4H]`
    pub w_x: Parameter<F>,
    /// `[H × 4H]`
    pub w_h: Parameter<F>,
    /// `[1 × 4H]`
    pub bias: Parameter<F>,
}

/// Everything one step needs for its backward pass.
#[derive(Clone, Debug)]
pub struct LstmStepCache<F> {
    x: Array2<F>,
    h_prev: Array2<F>,
    c_prev: Array2<F>,
    i: Array2<F>,
    f: Array2<F>,
    g: Array2<F>,
    o: Array2<F>,
    tanh_c: Array2<F>,
    /// Rows that advanced this step; inactive rows carry state through.
    active: Vec<bool>,
}

impl<F: Scalar> LstmCell<F> {
    /// Weights uniform in ±1/√fan_in (input size for `w_x`, hidden size for
    /// `w_h` and the bias); forget-gate bias set to 1.
    pub fn new(name: &str, input: usize, hidden: usize, init: &mut Init) -> Self {
        let w_x = init.uniform(input, 4 * hidden, 1.0 / (input as f64).sqrt());
        let w_h = init.uniform(hidden, 4 * hidden, 1.0 / (hidden as f64).sqrt());
        let mut bias: Array2<F> = init.uniform(1, 4 * hidden, 1.0 / (hidden as f64).sqrt());
        bias.slice_mut(s![.., hidden..2 * hidden]).fill(F::one());
        LstmCell {
            w_x: Parameter::new(format!("{name}.w_x"), w_x),
            w_h: Parameter::new(format!("{name}.w_h"), w_h),
            bias: Parameter::new(format!("{name}.bias"), bias),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.value.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w_h.value.nrows()
    }

    /// Advances a batch of states by one step. Rows with `active == false`
    /// keep `h_prev`/`c_prev` unchanged.
    pub fn step(
        &self,
        x: ArrayView2<F>,
        h_prev: ArrayView2<F>,
        c_prev: ArrayView2<F>,
        active: &[bool],
    ) -> Result<(Array2<F>, Array2<F>, LstmStepCache<F>)> {
        let hd = self.hidden();
        let b = x.nrows();
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
                context: format!("{} input", self.w_x.name),
            });
        }
        if h_prev.dim() != (b, hd) || c_prev.dim() != (b, hd) || active.len() != b {
            return Err(Error::DimensionMismatch {
                expected: hd,
                got: h_prev.ncols(),
                context: format!("{} state", self.w_h.name),
            });
        }

        let mut z = x.dot(&self.w_x.value);
        general_mat_mul(F::one(), &h_prev, &self.w_h.value, F::one(), &mut z);
        z += &self.bias.value;

        let i = z.slice(s![.., 0..hd]).mapv(sigmoid);
        let f = z.slice(s![.., hd..2 * hd]).mapv(sigmoid);
        let g = z.slice(s![.., 2 * hd..3 * hd]).mapv(F::tanh);
        let o = z.slice(s![.., 3 * hd..4 * hd]).mapv(sigmoid);

        let mut c = &f * &c_prev + &i * &g;
        let tanh_c = c.mapv(F::tanh);
        let mut h = &o * &tanh_c;
        for (r, &on) in active.iter().enumerate() {
            if !on {
                h.row_mut(r).assign(&h_prev.row(r));
                c.row_mut(r).assign(&c_prev.row(r));
            }
        }
        let cache = LstmStepCache {
            x: x.to_owned(),
            h_prev: h_prev.to_owned(),
            c_prev: c_prev.to_owned(),
            i,
            f,
            g,
            o,
            tanh_c,
            active: active.to_vec(),
        };
        Ok((h, c, cache))
    }

    /// Backward through one step given gradients w.r.t. the step's output
    /// state. Returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &mut self,
        cache: &LstmStepCache<F>,
        dh: ArrayView2<F>,
        dc: ArrayView2<F>,
    ) -> (Array2<F>, Array2<F>, Array2<F>) {
        let hd = self.hidden();
        let one = F::one();
        let d_o = &dh * &cache.tanh_c;
        let dc_total = &dc + &(&dh * &cache.o * &cache.tanh_c.mapv(|t| one - t * t));
        let d_i = &dc_total * &cache.g;
        let d_g = &dc_total * &cache.i;
        let d_f = &dc_total * &cache.c_prev;
        let mut dc_prev = &dc_total * &cache.f;

        let b = dh.nrows();
        let mut dz = Array2::<F>::zeros((b, 4 * hd));
        dz.slice_mut(s![.., 0..hd])
            .assign(&(&d_i * &cache.i.mapv(|v| v * (one - v))));
        dz.slice_mut(s![.., hd..2 * hd])
            .assign(&(&d_f * &cache.f.mapv(|v| v * (one - v))));
        dz.slice_mut(s![.., 2 * hd..3 * hd])
            .assign(&(&d_g * &cache.g.mapv(|v| one - v * v)));
        dz.slice_mut(s![.., 3 * hd..4 * hd])
            .assign(&(&d_o * &cache.o.mapv(|v| v * (one - v))));
        for (r, &on) in cache.active.iter().enumerate() {
            if !on {
                dz.row_mut(r).fill(F::zero());
            }
        }

        general_mat_mul(one, &cache.x.t(), &dz, one, &mut self.w_x.grad);
        general_mat_mul(one, &cache.h_prev.t(), &dz, one, &mut self.w_h.grad);
        self.bias.grad += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));

        let dx = dz.dot(&self.w_x.value.t());
        let mut dh_prev = dz.dot(&self.w_h.value.t());
        for (r, &on) in cache.active.iter().enumerate() {
            if !on {
                dh_prev.row_mut(r).assign(&dh.row(r));
                dc_prev.row_mut(r).assign(&dc.row(r));
            }
        }
        (dx, dh_prev, dc_prev)
    }
}

impl<F: Scalar> Module<F> for LstmCell<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.w_x, &self.w_h, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.bias]
    }
}

/// Bidirectional LSTM over a batch of padded sequences.
#[derive(Clone, Debug)]
pub struct BiLstm<F> {
    pub fwd: LstmCell<F>,
    pub bwd: LstmCell<F>,
}

#[derive(Clone, Debug)]
pub struct BiLstmOutput<F> {
    /// Per time step `[B × 2H]`; rows past a sequence's length are zero.
    pub states: Vec<Array2<F>>,
    /// `[B × 2H]`: forward state at `len−1` and backward state at 0.
    pub last: Array2<F>,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache<F> {
    fwd: Vec<LstmStepCache<F>>,
    /// Indexed by time step, not by processing order.
    bwd: Vec<LstmStepCache<F>>,
    lens: Vec<usize>,
}

impl<F: Scalar> BiLstm<F> {
    pub fn new(name: &str, input: usize, hidden: usize, init: &mut Init) -> Self {
        BiLstm {
            fwd: LstmCell::new(&format!("{name}.fwd"), input, hidden, init),
            bwd: LstmCell::new(&format!("{name}.bwd"), input, hidden, init),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }

    /// `xs[t]` is the `[B × input]` slice at time `t`. Every length must be
    /// in `1..=xs.len()`.
    pub fn forward(&self, xs: &[Array2<F>], lens: &[usize]) -> Result<(BiLstmOutput<F>, BiLstmCache<F>)> {
        let steps = xs.len();
        let b = lens.len();
        if let Some(&bad) = lens.iter().find(|&&l| l == 0 || l > steps) {
            return Err(Error::InvalidArgument(format!(
                "sequence length {bad} outside 1..={steps}"
            )));
        }
        let hd = self.hidden();
        let mut states = vec![Array2::<F>::zeros((b, 2 * hd)); steps];

        let mut h = Array2::zeros((b, hd));
        let mut c = Array2::zeros((b, hd));
        let mut fwd = Vec::with_capacity(steps);
        for t in 0..steps {
            let active: Vec<bool> = lens.iter().map(|&l| t < l).collect();
            let (h2, c2, cache) = self.fwd.step(xs[t].view(), h.view(), c.view(), &active)?;
            for (r, &on) in active.iter().enumerate() {
                if on {
                    states[t].slice_mut(s![r, 0..hd]).assign(&h2.row(r));
                }
            }
            h = h2;
            c = c2;
            fwd.push(cache);
        }
        let h_fwd = h;

        let mut h = Array2::zeros((b, hd));
        let mut c = Array2::zeros((b, hd));
        let mut bwd = Vec::with_capacity(steps);
        for t in (0..steps).rev() {
            let active: Vec<bool> = lens.iter().map(|&l| t < l).collect();
            let (h2, c2, cache) = self.bwd.step(xs[t].view(), h.view(), c.view(), &active)?;
            for (r, &on) in active.iter().enumerate() {
                if on {
                    states[t].slice_mut(s![r, hd..2 * hd]).assign(&h2.row(r));
                }
            }
            h = h2;
            c = c2;
            bwd.push(cache);
        }
        bwd.reverse();

        let mut last = Array2::zeros((b, 2 * hd));
        last.slice_mut(s![.., 0..hd]).assign(&h_fwd);
        last.slice_mut(s![.., hd..2 * hd]).assign(&h);

        Ok((
            BiLstmOutput { states, last },
            BiLstmCache {
                fwd,
                bwd,
                lens: lens.to_vec(),
            },
        ))
    }

    /// Backpropagates gradients w.r.t. the per-step states and/or the final
    /// state; returns gradients w.r.t. each `xs[t]`.
    pub fn backward(
        &mut self,
        cache: &BiLstmCache<F>,
        d_states: Option<&[Array2<F>]>,
        d_last: Option<ArrayView2<F>>,
    ) -> Vec<Array2<F>> {
        let steps = cache.fwd.len();
        let b = cache.lens.len();
        let hd = self.hidden();

        let masked = |t: usize, cols: std::ops::Range<usize>| -> Option<Array2<F>> {
            d_states.map(|ds| {
                let mut g = ds[t].slice(s![.., cols]).to_owned();
                for (r, &l) in cache.lens.iter().enumerate() {
                    if t >= l {
                        g.row_mut(r).fill(F::zero());
                    }
                }
                g
            })
        };

        let mut dxs = vec![Array2::<F>::zeros((b, self.fwd.input_dim())); steps];

        let mut dh = match d_last {
            Some(d) => d.slice(s![.., 0..hd]).to_owned(),
            None => Array2::zeros((b, hd)),
        };
        let mut dc = Array2::zeros((b, hd));
        for t in (0..steps).rev() {
            if let Some(g) = masked(t, 0..hd) {
                dh += &g;
            }
            let (dx, dh2, dc2) = self.fwd.step_backward(&cache.fwd[t], dh.view(), dc.view());
            dxs[t] += &dx;
            dh = dh2;
            dc = dc2;
        }

        let mut dh = match d_last {
            Some(d) => d.slice(s![.., hd..2 * hd]).to_owned(),
            None => Array2::zeros((b, hd)),
        };
        let mut dc = Array2::zeros((b, hd));
        for t in 0..steps {
            if let Some(g) = masked(t, hd..2 * hd) {
                dh += &g;
            }
            let (dx, dh2, dc2) = self.bwd.step_backward(&cache.bwd[t], dh.view(), dc.view());
            dxs[t] += &dx;
            dh = dh2;
            dc = dc2;
        }
        dxs
    }
}

impl<F: Scalar> Module<F> for BiLstm<F> {
    fn params(&self) -> Vec<&Parameter<F>> {
        let mut v = self.fwd.params();
        v.extend(self.bwd.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        let mut v = self.fwd.params_mut();
        v.extend(self.bwd.params_mut());
        v
    }
}

/// Single-sequence helper: `seq` is `[len × input]`, of which the first
/// `true_len` rows are real. Returns all states `[len × 2H]` (zero past
/// `true_len`) and the final `[2H]` vector.
pub fn bilstm_forward<F: Scalar>(
    lstm: &BiLstm<F>,
    seq: ArrayView2<F>,
    true_len: usize,
) -> Result<(Array2<F>, ndarray::Array1<F>)> {
    if true_len == 0 {
        return Err(Error::InvalidArgument("true_len must be positive".into()));
    }
    let xs: Vec<Array2<F>> = seq.rows().into_iter().map(|r| r.insert_axis(Axis(0)).to_owned()).collect();
    let (out, _) = lstm.forward(&xs, &[true_len])?;
    let mut all = Array2::zeros((seq.nrows(), lstm.output_dim()));
    for (t, st) in out.states.iter().enumerate() {
        all.row_mut(t).assign(&st.row(0));
    }
    Ok((all, out.last.row(0).to_owned()))
}
