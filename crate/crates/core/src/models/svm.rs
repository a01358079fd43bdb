//! One-vs-rest linear SVM trained by dual coordinate descent.
//!
//! Each binary machine solves
//!
//! ```text
//! min_w  1/2 |w|^2 + C * sum_i max(0, 1 - y_i (w . x_i + w_b * B))
//! ```
//!
//! where the bias `w_b` rides on a constant feature `B` (so it is
//! regularized along with the weights). The dual is a box-constrained QP
//! in `alpha in [0, C]^n`, solved one coordinate at a time.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    /// Stop when the projected-gradient spread falls below this.
    pub tol: f64,
    pub max_epochs: usize,
    /// Value of the constant bias feature.
    pub bias_feature: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_epochs: 2000,
            bias_feature: 1.0,
            seed: 0,
        }
    }
}

/// Result of one binary fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub alphas: Vec<f64>,
    pub dual_objective: f64,
    pub epochs: usize,
    pub converged: bool,
}

impl BinaryFit {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual objective `sum(alpha) - 1/2 alpha' Q alpha` with
/// `Q_ij = y_i y_j (x_i . x_j + B^2)`.
pub fn dual_objective(x: &[Vec<f64>], y: &[f64], alphas: &[f64], bias_feature: f64) -> f64 {
    let b2 = bias_feature * bias_feature;
    let mut quad = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            quad += alphas[i] * alphas[j] * y[i] * y[j] * (dot(&x[i], &x[j]) + b2);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// Trains one binary machine; `y` holds +1 / -1.
pub fn train_binary<R: AsRef<[f64]>>(x: &[R], y: &[f64], params: &SvmParams) -> BinaryFit {
    let n = x.len();
    let width = x.first().map_or(0, |r| r.as_ref().len());
    let b = params.bias_feature;
    let diag: Vec<f64> = x
        .iter()
        .map(|r| dot(r.as_ref(), r.as_ref()) + b * b)
        .collect();
    let mut w = vec![0.0; width];
    let mut wb = 0.0;
    let mut alphas = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut converged = false;
    let mut epochs = 0;

    while epochs < params.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            if diag[i] <= 0.0 {
                continue;
            }
            let xi = x[i].as_ref();
            let g = y[i] * (dot(&w, xi) + wb * b) - 1.0;
            let a = alphas[i];
            let pg = if a <= 0.0 {
                g.min(0.0)
            } else if a >= params.c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let new = (a - g / diag[i]).clamp(0.0, params.c);
                let delta = (new - a) * y[i];
                if delta != 0.0 {
                    for (wk, xk) in w.iter_mut().zip(xi) {
                        *wk += delta * xk;
                    }
                    wb += delta * b;
                }
                alphas[i] = new;
            }
        }
        if pg_max - pg_min <= params.tol {
            converged = true;
            break;
        }
    }

    let dual = dual_from_primal(&w, wb, &alphas);
    BinaryFit {
        weights: w,
        bias: wb * b,
        alphas,
        dual_objective: dual,
        epochs,
        converged,
    }
}

// With w = sum alpha_i y_i x_i, alpha' Q alpha = |w|^2 + w_b^2.
fn dual_from_primal(w: &[f64], wb: f64, alphas: &[f64]) -> f64 {
    alphas.iter().sum::<f64>() - 0.5 * (dot(w, w) + wb * wb)
}

/// 60 (or however many classes are present) binary machines.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Class index of each machine, ascending.
    pub classes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub c: f64,
}

impl SvmModel {
    pub fn width(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.width() {
            return Err(Error::Length {
                expected: self.width(),
                got: x.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, x) + b)
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// `SVM1 | u32 version | u32 classes | u32 width | f64 C` then per
    /// machine `u32 class | f64 bias | width * f64 weights`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"SVM1");
        let w = &mut out;
        w.write_u32::<LittleEndian>(1).expect("write to Vec");
        w.write_u32::<LittleEndian>(self.classes.len() as u32)
            .expect("write to Vec");
        w.write_u32::<LittleEndian>(self.width() as u32)
            .expect("write to Vec");
        w.write_f64::<LittleEndian>(self.c).expect("write to Vec");
        for ((class, bias), weights) in self.classes.iter().zip(&self.biases).zip(&self.weights) {
            w.write_u32::<LittleEndian>(*class as u32)
                .expect("write to Vec");
            w.write_f64::<LittleEndian>(*bias).expect("write to Vec");
            for &v in weights {
                w.write_f64::<LittleEndian>(v).expect("write to Vec");
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let trunc = |_| Error::Format("SVM1 file truncated".into());
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(trunc)?;
        if &magic != b"SVM1" {
            return Err(Error::Format(format!("bad SVM1 magic {magic:?}")));
        }
        let version = cur.read_u32::<LittleEndian>().map_err(trunc)?;
        if version != 1 {
            return Err(Error::Format(format!("unsupported SVM1 version {version}")));
        }
        let n = cur.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let width = cur.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let c = cur.read_f64::<LittleEndian>().map_err(trunc)?;
        let mut model = SvmModel {
            classes: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
            biases: Vec::with_capacity(n),
            c,
        };
        for _ in 0..n {
            model
                .classes
                .push(cur.read_u32::<LittleEndian>().map_err(trunc)? as usize);
            model
                .biases
                .push(cur.read_f64::<LittleEndian>().map_err(trunc)?);
            let mut w = vec![0.0; width];
            cur.read_f64_into::<LittleEndian>(&mut w).map_err(trunc)?;
            model.weights.push(w);
        }
        if cur.position() as usize != bytes.len() {
            return Err(Error::Format("trailing bytes after SVM1 model".into()));
        }
        Ok(model)
    }
}

/// Trains one-vs-rest machines for every class present in `labels`.
/// Machines train in parallel; each is deterministic given `params.seed`.
pub fn train_svm<R: AsRef<[f64]> + Sync>(
    x: &[R],
    labels: &[usize],
    params: &SvmParams,
) -> Result<SvmModel> {
    if x.is_empty() {
        return Err(Error::EmptyInput("svm training set"));
    }
    if x.len() != labels.len() {
        return Err(Error::Length {
            expected: x.len(),
            got: labels.len(),
        });
    }
    let width = x[0].as_ref().len();
    if let Some(bad) = x.iter().find(|r| r.as_ref().len() != width) {
        return Err(Error::Length {
            expected: width,
            got: bad.as_ref().len(),
        });
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels);
    }
    let fits: Vec<BinaryFit> = classes
        .par_iter()
        .map(|&k| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == k { 1.0 } else { -1.0 })
                .collect();
            let p = SvmParams {
                seed: params.seed.wrapping_add(k as u64),
                ..*params
            };
            train_binary(x, &y, &p)
        })
        .collect();
    let (weights, biases) = fits.into_iter().map(|f| (f.weights, f.bias)).unzip();
    Ok(SvmModel {
        classes,
        weights,
        biases,
        c: params.c,
    })
}

/// Class with the largest decision value; ties go to the lowest class.
pub fn predict_svm(model: &SvmModel, x: &[f64]) -> Result<usize> {
    let scores = model.decision_values(x)?;
    Ok(model.classes[argmax(&scores)])
}

impl Classifier<[f64]> for SvmModel {
    fn classify(&self, x: &[f64]) -> usize {
        predict_svm(self, x).expect("input width matches model")
    }
}

impl Classifier<Vec<f64>> for SvmModel {
    fn classify(&self, x: &Vec<f64>) -> usize {
        predict_svm(self, x).expect("input width matches model")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            vec![
                vec![2.0, 0.0],
                vec![3.0, 0.0],
                vec![-2.0, 0.0],
                vec![-3.0, 0.0],
            ],
            vec![1, 1, 0, 0],
        )
    }

    #[test]
    fn symmetric_toy_boundary() {
        let (x, y) = toy();
        let m = train_svm(&x, &y, &SvmParams::default()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(predict_svm(&m, xi).unwrap(), *yi);
        }
        // boundary at x = 0 once solved well past the default tolerance
        let tight = SvmParams {
            tol: 1e-12,
            max_epochs: 100_000,
            ..SvmParams::default()
        };
        let m = train_svm(&x, &y, &tight).unwrap();
        let pos = &m;
        let k = pos.classes.iter().position(|&c| c == 1).unwrap();
        assert!(pos.biases[k].abs() < 1e-6);
        assert!(pos.weights[k][1].abs() < 1e-12);
        assert!(pos.weights[k][0] > 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = toy();
        assert!(matches!(
            train_svm(&x, &[3, 3, 3, 3], &SvmParams::default()),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn width_mismatch() {
        let (x, y) = toy();
        let m = train_svm(&x, &y, &SvmParams::default()).unwrap();
        assert!(matches!(predict_svm(&m, &[1.0]), Err(Error::Length { .. })));
    }

    #[test]
    fn equal_scores_pick_lowest_class() {
        let m = SvmModel {
            classes: vec![0, 1, 2],
            weights: vec![vec![0.0]; 3],
            biases: vec![0.5; 3],
            c: 1.0,
        };
        assert_eq!(predict_svm(&m, &[3.0]).unwrap(), 0);
    }

    #[test]
    fn only_positive_side_wins() {
        let m = SvmModel {
            classes: vec![0, 1, 2],
            weights: vec![vec![-1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]],
            biases: vec![-0.5, -0.5, -0.5],
            c: 1.0,
        };
        assert_eq!(predict_svm(&m, &[0.0, 2.0]).unwrap(), 1);
    }

    #[test]
    fn closed_form_dual_matches_pairwise_sum() {
        let x = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, -0.7]];
        let y = vec![1.0, -1.0, 1.0];
        let fit = train_binary(&x, &y, &SvmParams::default());
        let direct = dual_objective(&x, &y, &fit.alphas, 1.0);
        assert!((direct - fit.dual_objective).abs() < 1e-10);
    }

    #[test]
    fn model_bytes_round_trip() {
        let (x, y) = toy();
        let m = train_svm(&x, &y, &SvmParams::default()).unwrap();
        let back = SvmModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert!(SvmModel::from_bytes(&m.to_bytes()[..30]).is_err());
    }
}
