//! Training objectives over Siamese branch outputs.
//!
//! - contrastive: `y·d² + (1−y)·max(0, m−d)²` with `d = ‖u−v‖₂`
//! - triplet: `max(0, ‖a−p‖₂ − ‖a−n‖₂ + m)`
//! - cosine-contrastive: `y·(1−c) + (1−y)·max(0, c−m)` with `c = cos(u, v)`
//!
//! Batch losses are means over the sampled pairs or triplets.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::corpus::{PairIndex, TripletIndex};
use crate::error::{Error, Result};
use crate::nn::ops::{dot, norm_sq};
use crate::nn::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Contrastive,
    Triplet,
    CosineContrastive,
}

impl LossKind {
    pub fn default_margin(self) -> f64 {
        match self {
            LossKind::Contrastive => 1.0,
            LossKind::Triplet => 0.3,
            LossKind::CosineContrastive => 0.3,
        }
    }

    pub fn uses_triplets(self) -> bool {
        self == LossKind::Triplet
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Contrastive => "contrastive",
            LossKind::Triplet => "triplet",
            LossKind::CosineContrastive => "cosine_contrastive",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contrastive" => Ok(LossKind::Contrastive),
            "triplet" => Ok(LossKind::Triplet),
            "cosine_contrastive" | "cosine-contrastive" => Ok(LossKind::CosineContrastive),
            other => Err(Error::InvalidArgument(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub margin: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        LossConfig {
            kind,
            margin: kind.default_margin(),
        }
    }

    pub fn with_margin(kind: LossKind, margin: f64) -> Result<Self> {
        let cfg = LossConfig { kind, margin };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            LossKind::Contrastive | LossKind::Triplet => self.margin > 0.0,
            LossKind::CosineContrastive => (0.0..1.0).contains(&self.margin),
        };
        if ok && self.margin.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "margin {} not allowed for {} loss",
                self.margin, self.kind
            )))
        }
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig::new(LossKind::CosineContrastive)
    }
}

/// Loss value with gradients w.r.t. both inputs.
#[derive(Clone, Debug)]
pub struct PairGrad {
    pub value: f64,
    pub du: Array1<f64>,
    pub dv: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct TripletGrad {
    pub value: f64,
    pub d_anchor: Array1<f64>,
    pub d_positive: Array1<f64>,
    pub d_negative: Array1<f64>,
}

fn diff<F: Scalar>(u: ArrayView1<F>, v: ArrayView1<F>) -> Array1<f64> {
    u.iter().zip(v.iter()).map(|(a, b)| a.to64() - b.to64()).collect()
}

fn check_len<F>(u: ArrayView1<F>, v: ArrayView1<F>) -> Result<()> {
    if u.len() == v.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
            context: "loss inputs".into(),
        })
    }
}

pub fn contrastive_grad<F: Scalar>(u: ArrayView1<F>, v: ArrayView1<F>, label: u8, margin: f64) -> Result<PairGrad> {
    check_len(u, v)?;
    let delta = diff(u, v);
    let d = delta.dot(&delta).sqrt();
    let (value, du) = if label == 1 {
        (d * d, &delta * 2.0)
    } else if d < margin {
        let gap = margin - d;
        // Subgradient 0 when u = v.
        let du = if d > 0.0 { &delta * (-2.0 * gap / d) } else { Array1::zeros(delta.len()) };
        (gap * gap, du)
    } else {
        (0.0, Array1::zeros(delta.len()))
    };
    let dv = -&du;
    Ok(PairGrad { value, du, dv })
}

pub fn contrastive<F: Scalar>(u: ArrayView1<F>, v: ArrayView1<F>, label: u8, margin: f64) -> Result<f64> {
    contrastive_grad(u, v, label, margin).map(|g| g.value)
}

pub fn triplet_grad<F: Scalar>(
    anchor: ArrayView1<F>,
    positive: ArrayView1<F>,
    negative: ArrayView1<F>,
    margin: f64,
) -> Result<TripletGrad> {
    check_len(anchor, positive)?;
    check_len(anchor, negative)?;
    let ap = diff(anchor, positive);
    let an = diff(anchor, negative);
    let d_ap = ap.dot(&ap).sqrt();
    let d_an = an.dot(&an).sqrt();
    let raw = d_ap - d_an + margin;
    let n = ap.len();
    if raw <= 0.0 {
        let z = Array1::zeros(n);
        return Ok(TripletGrad {
            value: 0.0,
            d_anchor: z.clone(),
            d_positive: z.clone(),
            d_negative: z,
        });
    }
    let unit_ap = if d_ap > 0.0 { &ap / d_ap } else { Array1::zeros(n) };
    let unit_an = if d_an > 0.0 { &an / d_an } else { Array1::zeros(n) };
    Ok(TripletGrad {
        value: raw,
        d_anchor: &unit_ap - &unit_an,
        d_positive: -&unit_ap,
        d_negative: unit_an,
    })
}

pub fn triplet<F: Scalar>(
    anchor: ArrayView1<F>,
    positive: ArrayView1<F>,
    negative: ArrayView1<F>,
    margin: f64,
) -> Result<f64> {
    triplet_grad(anchor, positive, negative, margin).map(|g| g.value)
}

pub fn cosine_contrastive_grad<F: Scalar>(
    u: ArrayView1<F>,
    v: ArrayView1<F>,
    label: u8,
    margin: f64,
) -> Result<PairGrad> {
    check_len(u, v)?;
    let nu2 = norm_sq(u);
    let nv2 = norm_sq(v);
    if nu2 == 0.0 || nv2 == 0.0 {
        return Err(Error::DegenerateVector("cosine-contrastive input".into()));
    }
    let nu = nu2.sqrt();
    let nv = nv2.sqrt();
    // sqrt(x·x) is exact, so c = 1 exactly when u = v.
    let c = (dot(u, v) / (nu2 * nv2).sqrt()).clamp(-1.0, 1.0);
    let (value, scale) = if label == 1 {
        (1.0 - c, -1.0)
    } else if c > margin {
        (c - margin, 1.0)
    } else {
        (0.0, 0.0)
    };
    let uf: Array1<f64> = u.iter().map(|x| x.to64()).collect();
    let vf: Array1<f64> = v.iter().map(|x| x.to64()).collect();
    // dc/du = v/(|u||v|) − c·u/|u|²
    let dc_du = &vf / (nu * nv) - &uf * (c / nu2);
    let dc_dv = &uf / (nu * nv) - &vf * (c / nv2);
    Ok(PairGrad {
        value,
        du: dc_du * scale,
        dv: dc_dv * scale,
    })
}

pub fn cosine_contrastive<F: Scalar>(u: ArrayView1<F>, v: ArrayView1<F>, label: u8, margin: f64) -> Result<f64> {
    cosine_contrastive_grad(u, v, label, margin).map(|g| g.value)
}

/// How a batch of code/text embeddings is paired for the loss.
#[derive(Clone, Debug)]
pub enum LossPlan {
    Pairs(Vec<PairIndex>),
    Triplets(Vec<TripletIndex>),
}

impl LossPlan {
    pub fn len(&self) -> usize {
        match self {
            LossPlan::Pairs(p) => p.len(),
            LossPlan::Triplets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mean loss over the plan, with gradients w.r.t. the code rows and the
/// text rows.
pub fn batch_loss<F: Scalar>(
    cfg: &LossConfig,
    codes: ArrayView2<F>,
    texts: ArrayView2<F>,
    plan: &LossPlan,
) -> Result<(f64, Array2<F>, Array2<F>)> {
    if plan.is_empty() {
        return Err(Error::InvalidArgument("empty loss plan".into()));
    }
    let scale = 1.0 / plan.len() as f64;
    let mut d_codes = Array2::<f64>::zeros(codes.raw_dim());
    let mut d_texts = Array2::<f64>::zeros(texts.raw_dim());
    let mut total = 0.0;
    match plan {
        LossPlan::Pairs(pairs) => {
            for p in pairs {
                let u = codes.row(p.code);
                let v = texts.row(p.text);
                let g = match cfg.kind {
                    LossKind::Contrastive => contrastive_grad(u, v, p.label, cfg.margin)?,
                    LossKind::CosineContrastive => cosine_contrastive_grad(u, v, p.label, cfg.margin)?,
                    LossKind::Triplet => {
                        return Err(Error::InvalidArgument("triplet loss needs a triplet plan".into()))
                    }
                };
                total += g.value;
                let mut dc = d_codes.row_mut(p.code);
                dc.scaled_add(scale, &g.du);
                let mut dt = d_texts.row_mut(p.text);
                dt.scaled_add(scale, &g.dv);
            }
        }
        LossPlan::Triplets(triplets) => {
            if cfg.kind != LossKind::Triplet {
                return Err(Error::InvalidArgument(format!("{} loss needs a pair plan", cfg.kind)));
            }
            for t in triplets {
                let g = triplet_grad(codes.row(t.anchor), texts.row(t.positive), texts.row(t.negative), cfg.margin)?;
                total += g.value;
                d_codes.row_mut(t.anchor).scaled_add(scale, &g.d_anchor);
                d_texts.row_mut(t.positive).scaled_add(scale, &g.d_positive);
                d_texts.row_mut(t.negative).scaled_add(scale, &g.d_negative);
            }
        }
    }
    Ok((total * scale, d_codes.mapv(F::of), d_texts.mapv(F::of)))
}
