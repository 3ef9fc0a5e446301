use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::{Channel, EncodedExample};
use crate::error::{Error, Result};
use crate::models::{CodeSearchModel, EvalLayer};

/// Which branch to embed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Code,
    Text,
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "code" => Ok(Side::Code),
            "text" => Ok(Side::Text),
            _ => Err(Error::InvalidArgument(format!("unknown side {s:?}"))),
        }
    }
}

/// Top-two principal components of a point set.
#[derive(Clone, Debug)]
pub struct Pca2 {
    /// `[n × 2]` projections of the centred points.
    pub coords: Array2<f64>,
    /// Descending.
    pub eigenvalues: [f64; 2],
    /// `[d × 2]` unit component vectors.
    pub components: Array2<f64>,
    pub mean: Array1<f64>,
}

/// PCA by eigendecomposition of the sample covariance. Each component's
/// sign is fixed so that its largest-magnitude entry is positive.
pub fn pca_2d(x: ArrayView2<f64>) -> Result<Pca2> {
    let (n, d) = x.dim();
    if n < 2 || d < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 points of dimension 2 or more, got {n} × {d}"
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("n > 0");
    let centred = &x - &mean;
    let cov = centred.t().dot(&centred) / (n as f64 - 1.0);
    let m = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Array2::<f64>::zeros((d, 2));
    for (k, &c) in order.iter().take(2).enumerate() {
        let v = eig.eigenvectors.column(c);
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .expect("d > 0");
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components[[i, k]] = sign * v[i];
        }
    }
    Ok(Pca2 {
        coords: centred.dot(&components),
        eigenvalues: [eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]],
        components,
        mean,
    })
}

/// Writes a tab-separated file: a header row, then per example its id, the
/// label when `labels` is non-empty, the embedding coordinates and, with
/// `project_2d`, two PCA coordinates.
pub fn export_embeddings(
    model: &CodeSearchModel<f32>,
    examples: &[EncodedExample],
    labels: &[Option<String>],
    side: Side,
    layer: EvalLayer,
    path: impl AsRef<Path>,
    project_2d: bool,
) -> Result<()> {
    let path = path.as_ref();
    if !labels.is_empty() && labels.len() != examples.len() {
        return Err(Error::DimensionMismatch {
            expected: examples.len(),
            got: labels.len(),
            context: "labels".into(),
        });
    }
    let emb = match side {
        Side::Code => model.encode_code(&examples.iter().collect::<Vec<_>>(), layer)?,
        Side::Text => model.encode_text(&examples.iter().map(|e| &e.text).collect::<Vec<&Channel>>(), layer)?,
    };
    let pca = if project_2d {
        Some(pca_2d(emb.mapv(f64::from).view())?)
    } else {
        None
    };

    let mut out = String::from("id");
    if !labels.is_empty() {
        out.push_str("\tlabel");
    }
    for j in 0..emb.ncols() {
        write!(out, "\td{j}").expect("string write");
    }
    if pca.is_some() {
        out.push_str("\tpc1\tpc2");
    }
    out.push('\n');
    for (i, ex) in examples.iter().enumerate() {
        out.push_str(&ex.id);
        if let Some(l) = labels.get(i) {
            out.push('\t');
            out.push_str(l.as_deref().unwrap_or(""));
        }
        for v in emb.row(i) {
            write!(out, "\t{v}").expect("string write");
        }
        if let Some(p) = &pca {
            write!(out, "\t{}\t{}", p.coords[[i, 0]], p.coords[[i, 1]]).expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
