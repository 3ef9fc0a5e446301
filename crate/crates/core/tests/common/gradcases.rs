//! Finite-difference checks for every layer, loss and full model.

use codesearch::corpus::{sample_pair_indices, sample_triplet_indices, EncodedExample};
use codesearch::losses::{batch_loss, LossConfig, LossKind, LossPlan};
use codesearch::models::{Arch, CodeSearchModel, Fusion};
use codesearch::nn::batchnorm::BatchNorm;
use codesearch::nn::dense::{relu, relu_backward};
use codesearch::nn::gradcheck::{grad_check, GradCheckConfig, GradCheckReport, GradCheckable};
use codesearch::nn::pool::{maxpool_elem, maxpool_elem_backward, maxpool_time, maxpool_time_backward};
use codesearch::nn::{BiLstm, Dense, Embedding, Init, LstmCell, Mode, Module, Parameter};
use ndarray::Array2;
use rand::seq::SliceRandom;

use super::{examples, rng, small_config, small_lens, small_sizes};

/// A state plus plain functions for parameter access, loss and gradient.
struct Case<S> {
    state: S,
    params: fn(&mut S) -> Vec<&mut Parameter<f64>>,
    loss: fn(&mut S) -> f64,
    grad: fn(&mut S) -> f64,
}

impl<S> GradCheckable for Case<S> {
    fn parameters(&mut self) -> Vec<&mut Parameter<f64>> {
        (self.params)(&mut self.state)
    }

    fn loss(&mut self) -> f64 {
        (self.loss)(&mut self.state)
    }

    fn loss_and_grad(&mut self) -> f64 {
        for p in self.parameters() {
            p.zero_grad();
        }
        (self.grad)(&mut self.state)
    }
}

fn weighted(w: &Array2<f64>, y: &Array2<f64>) -> f64 {
    (w * y).sum()
}

fn input(name: &str, rows: usize, cols: usize, seed: u64) -> Parameter<f64> {
    Parameter::new(name, Init::new(seed).uniform(rows, cols, 1.0))
}

/// Values with pairwise gaps of at least 0.01, so no max-pool winner
/// changes under a 1e-3 nudge.
fn spaced(rows: usize, cols: usize, k: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    let offset = k as f64 * 0.0025;
    let mut v: Vec<f64> = (0..rows * cols).map(|i| i as f64 * 0.01 - 0.5 + offset).collect();
    v.shuffle(&mut r);
    Array2::from_shape_vec((rows, cols), v).unwrap()
}

fn check<S>(case: Case<S>, cfg: &GradCheckConfig) -> GradCheckReport {
    let mut case = case;
    grad_check(&mut case, cfg)
}

struct EmbeddingState {
    emb: Embedding<f64>,
    ids: Vec<u32>,
    w: Array2<f64>,
}

fn embedding_case() -> Case<EmbeddingState> {
    let mut init = Init::new(1);
    Case {
        state: EmbeddingState {
            emb: Embedding::new("emb", 7, 4, &mut init),
            ids: vec![3, 0, 3, 6, 1],
            w: init.uniform(5, 4, 1.0),
        },
        params: |s| s.emb.params_mut(),
        loss: |s| weighted(&s.w, &s.emb.forward(&s.ids).unwrap()),
        grad: |s| {
            let y = s.emb.forward(&s.ids).unwrap();
            s.emb.backward(&s.ids, s.w.view());
            weighted(&s.w, &y)
        },
    }
}

struct DenseState {
    dense: Dense<f64>,
    x: Parameter<f64>,
    w: Array2<f64>,
    relu: bool,
}

impl DenseState {
    fn forward(&self) -> Array2<f64> {
        let z = self.dense.forward(self.x.value.view()).unwrap();
        if self.relu {
            relu(z.view())
        } else {
            z
        }
    }
}

fn dense_case(with_relu: bool) -> Case<DenseState> {
    let mut init = Init::new(2);
    let mut dense = Dense::new("dense", 5, 4, &mut init);
    let x = input("x", 3, 5, 3);
    if with_relu {
        // Keep every pre-activation well away from the kink.
        let z = dense.forward(x.value.view()).unwrap();
        let shift = z.mapv(|v| if v.abs() < 0.05 { 0.1 } else { 0.0 });
        let mean_shift = shift.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
        dense.bias.value += &mean_shift;
    }
    Case {
        state: DenseState {
            dense,
            x,
            w: init.uniform(3, 4, 1.0),
            relu: with_relu,
        },
        params: |s| {
            let mut v = s.dense.params_mut();
            v.push(&mut s.x);
            v
        },
        loss: |s| weighted(&s.w, &s.forward()),
        grad: |s| {
            let z = s.dense.forward(s.x.value.view()).unwrap();
            let (y, dz) = if s.relu {
                let y = relu(z.view());
                let dz = relu_backward(y.view(), s.w.view());
                (y, dz)
            } else {
                (z, s.w.clone())
            };
            let dx = s.dense.backward(s.x.value.view(), dz.view());
            s.x.grad += &dx;
            weighted(&s.w, &y)
        },
    }
}

struct BnState {
    bn: BatchNorm<f64>,
    x: Parameter<f64>,
    w: Array2<f64>,
}

fn batchnorm_case() -> Case<BnState> {
    let mut init = Init::new(4);
    let mut bn = BatchNorm::new("bn", 4);
    bn.gamma.value = init.uniform(1, 4, 1.0) + 1.0;
    bn.beta.value = init.uniform(1, 4, 1.0);
    Case {
        state: BnState {
            bn,
            x: input("x", 5, 4, 5),
            w: init.uniform(5, 4, 1.0),
        },
        params: |s| {
            let mut v = s.bn.params_mut();
            v.push(&mut s.x);
            v
        },
        loss: |s| weighted(&s.w, &s.bn.forward(s.x.value.view(), Mode::Train).unwrap().0),
        grad: |s| {
            let (y, cache) = s.bn.forward(s.x.value.view(), Mode::Train).unwrap();
            let dx = s.bn.backward(cache.as_ref().unwrap(), s.w.view());
            s.x.grad += &dx;
            weighted(&s.w, &y)
        },
    }
}

struct CellState {
    cell: LstmCell<f64>,
    x: Parameter<f64>,
    h: Parameter<f64>,
    c: Parameter<f64>,
    wh: Array2<f64>,
    wc: Array2<f64>,
}

const CELL_ACTIVE: [bool; 3] = [true, false, true];

fn lstm_cell_case() -> Case<CellState> {
    let mut init = Init::new(6);
    Case {
        state: CellState {
            cell: LstmCell::new("cell", 4, 3, &mut init),
            x: input("x", 3, 4, 7),
            h: input("h", 3, 3, 8),
            c: input("c", 3, 3, 9),
            wh: init.uniform(3, 3, 1.0),
            wc: init.uniform(3, 3, 1.0),
        },
        params: |s| {
            let mut v = s.cell.params_mut();
            v.extend([&mut s.x, &mut s.h, &mut s.c]);
            v
        },
        loss: |s| {
            let (h, c, _) = s
                .cell
                .step(s.x.value.view(), s.h.value.view(), s.c.value.view(), &CELL_ACTIVE)
                .unwrap();
            weighted(&s.wh, &h) + weighted(&s.wc, &c)
        },
        grad: |s| {
            let (h, c, cache) = s
                .cell
                .step(s.x.value.view(), s.h.value.view(), s.c.value.view(), &CELL_ACTIVE)
                .unwrap();
            let (dx, dh, dc) = s.cell.step_backward(&cache, s.wh.view(), s.wc.view());
            s.x.grad += &dx;
            s.h.grad += &dh;
            s.c.grad += &dc;
            weighted(&s.wh, &h) + weighted(&s.wc, &c)
        },
    }
}

struct BiLstmState {
    lstm: BiLstm<f64>,
    xs: Vec<Parameter<f64>>,
    lens: Vec<usize>,
    ws: Vec<Array2<f64>>,
    wl: Array2<f64>,
}

impl BiLstmState {
    fn inputs(&self) -> Vec<Array2<f64>> {
        self.xs.iter().map(|p| p.value.clone()).collect()
    }

    fn value(&self, states: &[Array2<f64>], last: &Array2<f64>) -> f64 {
        states.iter().zip(&self.ws).map(|(s, w)| weighted(w, s)).sum::<f64>() + weighted(&self.wl, last)
    }
}

fn bilstm_case() -> Case<BiLstmState> {
    let mut init = Init::new(10);
    let steps = 4;
    Case {
        state: BiLstmState {
            lstm: BiLstm::new("bilstm", 3, 2, &mut init),
            xs: (0..steps).map(|t| input(&format!("x{t}"), 3, 3, 20 + t as u64)).collect(),
            lens: vec![4, 1, 2],
            ws: (0..steps).map(|_| init.uniform(3, 4, 1.0)).collect(),
            wl: init.uniform(3, 4, 1.0),
        },
        params: |s| {
            let mut v = s.lstm.params_mut();
            v.extend(s.xs.iter_mut());
            v
        },
        loss: |s| {
            let (out, _) = s.lstm.forward(&s.inputs(), &s.lens).unwrap();
            s.value(&out.states, &out.last)
        },
        grad: |s| {
            let (out, cache) = s.lstm.forward(&s.inputs(), &s.lens).unwrap();
            let dxs = s.lstm.backward(&cache, Some(&s.ws), Some(s.wl.view()));
            for (p, d) in s.xs.iter_mut().zip(dxs) {
                p.grad += &d;
            }
            s.value(&out.states, &out.last)
        },
    }
}

struct PoolState {
    xs: Vec<Parameter<f64>>,
    lens: Vec<usize>,
    w: Array2<f64>,
}

fn pool_time_case() -> Case<PoolState> {
    Case {
        state: PoolState {
            xs: (0..4)
                .map(|t| Parameter::new(format!("x{t}"), spaced(3, 5, t, 30 + t as u64)))
                .collect(),
            lens: vec![4, 2, 1],
            w: Init::new(11).uniform(3, 5, 1.0),
        },
        params: |s| s.xs.iter_mut().collect(),
        loss: |s| {
            let xs: Vec<_> = s.xs.iter().map(|p| p.value.clone()).collect();
            weighted(&s.w, &maxpool_time(&xs, &s.lens).unwrap().0)
        },
        grad: |s| {
            let xs: Vec<_> = s.xs.iter().map(|p| p.value.clone()).collect();
            let (y, arg) = maxpool_time(&xs, &s.lens).unwrap();
            for (p, d) in s.xs.iter_mut().zip(maxpool_time_backward(&arg, &s.w)) {
                p.grad += &d;
            }
            weighted(&s.w, &y)
        },
    }
}

fn pool_elem_case() -> Case<PoolState> {
    Case {
        state: PoolState {
            xs: (0..3)
                .map(|k| Parameter::new(format!("v{k}"), spaced(2, 6, k, 40 + k as u64)))
                .collect(),
            lens: Vec::new(),
            w: Init::new(12).uniform(2, 6, 1.0),
        },
        params: |s| s.xs.iter_mut().collect(),
        loss: |s| {
            let refs: Vec<_> = s.xs.iter().map(|p| &p.value).collect();
            weighted(&s.w, &maxpool_elem(&refs).unwrap().0)
        },
        grad: |s| {
            let refs: Vec<_> = s.xs.iter().map(|p| &p.value).collect();
            let (y, arg) = maxpool_elem(&refs).unwrap();
            for (p, d) in s.xs.iter_mut().zip(maxpool_elem_backward(&arg, &s.w)) {
                p.grad += &d;
            }
            weighted(&s.w, &y)
        },
    }
}

struct LossState {
    cfg: LossConfig,
    codes: Parameter<f64>,
    texts: Parameter<f64>,
    plan: LossPlan,
}

impl LossState {
    fn run(&self) -> (f64, Array2<f64>, Array2<f64>) {
        batch_loss(&self.cfg, self.codes.value.view(), self.texts.value.view(), &self.plan).unwrap()
    }
}

/// Hinge arguments of every pair or triplet in the plan, to keep test
/// points away from the corners.
fn hinge_gaps(s: &LossState) -> Vec<f64> {
    let dist = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| (&a - &b).mapv(|x| x * x).sum().sqrt();
    let cos = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
        a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
    };
    let (c, t) = (&s.codes.value, &s.texts.value);
    match &s.plan {
        LossPlan::Pairs(pairs) => pairs
            .iter()
            .filter(|p| p.label == 0)
            .map(|p| match s.cfg.kind {
                LossKind::Contrastive => dist(c.row(p.code), t.row(p.text)) - s.cfg.margin,
                _ => cos(c.row(p.code), t.row(p.text)) - s.cfg.margin,
            })
            .collect(),
        LossPlan::Triplets(ts) => ts
            .iter()
            .map(|x| {
                dist(c.row(x.anchor), t.row(x.positive)) - dist(c.row(x.anchor), t.row(x.negative)) + s.cfg.margin
            })
            .collect(),
    }
}

fn loss_case(kind: LossKind, seed: u64) -> Case<LossState> {
    let mut r = rng(seed);
    let cfg = LossConfig::new(kind);
    for attempt in 0.. {
        let plan = if kind.uses_triplets() {
            LossPlan::Triplets(sample_triplet_indices(6, &mut r).unwrap())
        } else {
            LossPlan::Pairs(sample_pair_indices(6, &mut r).unwrap())
        };
        let scale = if kind == LossKind::Contrastive { 0.3 } else { 1.0 };
        let state = LossState {
            cfg,
            codes: Parameter::new("codes", Init::new(seed * 100 + attempt).uniform(6, 4, scale)),
            texts: Parameter::new("texts", Init::new(seed * 100 + attempt + 50).uniform(6, 4, scale)),
            plan,
        };
        let gaps = hinge_gaps(&state);
        let straddles = gaps.iter().any(|g| *g > 0.0) && gaps.iter().any(|g| *g < 0.0);
        if straddles && gaps.iter().all(|g| g.abs() > 1e-2) {
            return Case {
                state,
                params: |s| vec![&mut s.codes, &mut s.texts],
                loss: |s| s.run().0,
                grad: |s| {
                    let (l, dc, dt) = s.run();
                    s.codes.grad += &dc;
                    s.texts.grad += &dt;
                    l
                },
            };
        }
    }
    unreachable!()
}

struct ModelState {
    model: CodeSearchModel<f64>,
    batch: Vec<EncodedExample>,
    plan: LossPlan,
}

fn model_case(arch: Arch, fusion: Fusion, kind: LossKind, s_emb: usize, seed: u64) -> Case<ModelState> {
    let mut cfg = small_config(arch, s_emb, seed);
    cfg.fusion = fusion;
    cfg.loss = LossConfig::new(kind);
    let model = CodeSearchModel::<f32>::build(cfg).unwrap().cast::<f64>();
    let batch = examples(seed + 1, 4, &small_sizes(), &small_lens());
    let mut r = rng(seed + 2);
    let plan = if kind.uses_triplets() {
        LossPlan::Triplets(sample_triplet_indices(4, &mut r).unwrap())
    } else {
        LossPlan::Pairs(sample_pair_indices(4, &mut r).unwrap())
    };
    Case {
        state: ModelState { model, batch, plan },
        params: |s| s.model.params_mut(),
        loss: |s| {
            let refs: Vec<&EncodedExample> = s.batch.iter().collect();
            s.model.loss_only(&refs, &s.plan).unwrap()
        },
        grad: |s| {
            let refs: Vec<&EncodedExample> = s.batch.iter().collect();
            s.model.loss_and_grad_frozen(&refs, &s.plan).unwrap()
        },
    }
}

/// Runs every check; returns `(name, report)` pairs.
pub fn run_all() -> Vec<(String, GradCheckReport)> {
    let full = GradCheckConfig::default();
    let sampled = GradCheckConfig {
        max_entries_per_param: Some(12),
        ..GradCheckConfig::default()
    };
    let mut out = vec![
        ("embedding".to_string(), check(embedding_case(), &full)),
        ("dense".to_string(), check(dense_case(false), &full)),
        ("relu".to_string(), check(dense_case(true), &full)),
        ("batchnorm".to_string(), check(batchnorm_case(), &full)),
        ("lstm_cell".to_string(), check(lstm_cell_case(), &full)),
        ("bilstm".to_string(), check(bilstm_case(), &full)),
        ("maxpool_time".to_string(), check(pool_time_case(), &full)),
        ("maxpool_elem".to_string(), check(pool_elem_case(), &full)),
    ];
    for kind in [LossKind::Contrastive, LossKind::Triplet, LossKind::CosineContrastive] {
        out.push((format!("loss_{kind}"), check(loss_case(kind, 7), &full)));
    }
    out.push((
        "model_dcs_semb2".to_string(),
        check(
            model_case(Arch::Dcs, Fusion::MaxPool, LossKind::CosineContrastive, 2, 3),
            &sampled,
        ),
    ));
    out.push((
        "model_dcs_semb100".to_string(),
        check(
            model_case(Arch::Dcs, Fusion::MaxPool, LossKind::CosineContrastive, 100, 4),
            &sampled,
        ),
    ));
    out.push((
        "model_dcs_concat_triplet".to_string(),
        check(model_case(Arch::Dcs, Fusion::ConcatDense, LossKind::Triplet, 100, 5), &sampled),
    ));
    for (i, arch) in [Arch::BilM, Arch::BilA, Arch::BilCs].into_iter().enumerate() {
        out.push((
            format!("model_{arch}_contrastive"),
            check(
                model_case(arch, Fusion::MaxPool, LossKind::Contrastive, 200, 6 + i as u64),
                &sampled,
            ),
        ));
    }
    out
}

