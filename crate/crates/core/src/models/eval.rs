//! Cross-validation, best-over-folds test evaluation and report export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::error::{Error, Result};
use crate::landmark::{WordClass, NUM_CLASSES};

/// Fold index of every sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub stratified: bool,
}

impl FoldPlan {
    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded stratified fold assignment. Each class is shuffled and dealt
/// round-robin, continuing where the previous class stopped, so fold sizes
/// differ by at most one. Falls back to a plain shuffled split when some
/// class has fewer than `k` samples.
pub fn kfold_assignment(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config("cv.k", "need at least two folds"));
    }
    if labels.len() < k {
        return Err(Error::config(
            "cv.k",
            format!("{} samples cannot fill {k} folds", labels.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let stratified = by_class.values().all(|m| m.len() >= k);
    let mut assignment = vec![0; labels.len()];
    if stratified {
        let mut next = 0;
        for members in by_class.values_mut() {
            members.shuffle(&mut rng);
            for &i in members.iter() {
                assignment[i] = next % k;
                next += 1;
            }
        }
    } else {
        log::warn!("a class has fewer than {k} samples; using unstratified folds");
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(&mut rng);
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % k;
        }
    }
    Ok(FoldPlan {
        k,
        assignment,
        stratified,
    })
}

fn accuracy<X, M: Classifier<X> + ?Sized>(model: &M, xs: &[&X], labels: &[usize]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let hits = xs
        .iter()
        .zip(labels)
        .filter(|(x, &y)| model.classify(x) == y)
        .count();
    hits as f64 / xs.len() as f64
}

#[derive(Debug, Clone)]
pub struct CvOutcome<M> {
    pub plan: FoldPlan,
    pub models: Vec<M>,
    pub fold_accuracies: Vec<f64>,
    pub avg_accuracy: f64,
}

/// Trains one model per fold, in parallel, and scores each on its held-out
/// fold. The trainer receives `(train_x, train_y, held_x, held_y)`; the
/// held-out part is there for early stopping only.
pub fn cross_validate<X, M, F>(
    xs: &[X],
    labels: &[usize],
    k: usize,
    seed: u64,
    trainer: F,
) -> Result<CvOutcome<M>>
where
    X: Sync,
    M: Classifier<X> + Send,
    F: Fn(&[&X], &[usize], &[&X], &[usize]) -> Result<M> + Sync,
{
    if xs.len() != labels.len() {
        return Err(Error::Length {
            expected: xs.len(),
            got: labels.len(),
        });
    }
    let plan = kfold_assignment(labels, k, seed)?;
    let gather = |idx: &[usize]| -> (Vec<&X>, Vec<usize>) {
        idx.iter().map(|&i| (&xs[i], labels[i])).unzip()
    };
    let results: Vec<(M, f64)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let (tx, ty) = gather(&plan.training(f));
            let (hx, hy) = gather(&plan.held_out(f));
            let model = trainer(&tx, &ty, &hx, &hy)?;
            let acc = accuracy(&model, &hx, &hy);
            log::info!("fold {f}: held-out accuracy {acc:.4}");
            Ok((model, acc))
        })
        .collect::<Result<_>>()?;
    let (models, fold_accuracies): (Vec<M>, Vec<f64>) = results.into_iter().unzip();
    let avg_accuracy = fold_accuracies.iter().sum::<f64>() / k as f64;
    Ok(CvOutcome {
        plan,
        models,
        fold_accuracies,
        avg_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fold_accuracies: Vec<f64>,
    pub avg_cv_accuracy: f64,
    /// Accuracy of every fold model on the full test set.
    pub test_accuracies: Vec<f64>,
    pub best_test_accuracy: f64,
    pub best_fold: usize,
    /// `confusion[true][predicted]` for the best fold model.
    pub confusion: Vec<Vec<u64>>,
    /// Top-1 accuracy per true class; `None` for classes absent from test.
    pub per_class_top1: Vec<Option<f64>>,
    pub class_labels: Vec<String>,
    pub test_count: usize,
}

/// Display labels for `n` classes: word number and gloss for the dataset
/// label set, plain indices otherwise.
pub fn class_labels(n: usize) -> Vec<String> {
    if n == NUM_CLASSES {
        WordClass::all()
            .map(|w| format!("{w} {}", w.gloss()))
            .collect()
    } else {
        (0..n).map(|i| i.to_string()).collect()
    }
}

/// Scores every fold model on the whole test set and builds the confusion
/// matrix from the best one (ties go to the earliest fold).
pub fn evaluate<X, M>(
    models: &[M],
    fold_accuracies: &[f64],
    xs: &[X],
    labels: &[usize],
    num_classes: usize,
) -> Result<EvalReport>
where
    X: Sync,
    M: Classifier<X>,
{
    if xs.is_empty() {
        return Err(Error::EmptyInput("test set"));
    }
    if models.is_empty() {
        return Err(Error::EmptyInput("fold models"));
    }
    if xs.len() != labels.len() {
        return Err(Error::Length {
            expected: xs.len(),
            got: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Label(format!("class {bad} >= {num_classes}")));
    }
    let predictions: Vec<Vec<usize>> = models
        .iter()
        .map(|m| xs.par_iter().map(|x| m.classify(x)).collect())
        .collect();
    let test_accuracies: Vec<f64> = predictions
        .iter()
        .map(|p| p.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / xs.len() as f64)
        .collect();
    let mut best_fold = 0;
    for (i, &a) in test_accuracies.iter().enumerate() {
        if a > test_accuracies[best_fold] {
            best_fold = i;
        }
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &y) in predictions[best_fold].iter().zip(labels) {
        // predictions outside the label range count in the last column
        confusion[y][p.min(num_classes - 1)] += 1;
    }
    let per_class_top1 = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: u64 = row.iter().sum();
            (total > 0).then(|| row[c] as f64 / total as f64)
        })
        .collect();
    let avg_cv_accuracy = if fold_accuracies.is_empty() {
        0.0
    } else {
        fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64
    };
    Ok(EvalReport {
        fold_accuracies: fold_accuracies.to_vec(),
        avg_cv_accuracy,
        best_test_accuracy: test_accuracies[best_fold],
        test_accuracies,
        best_fold,
        confusion,
        per_class_top1,
        class_labels: class_labels(num_classes),
        test_count: xs.len(),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Confusion matrix with a header row of predicted labels and a leading
    /// column of true labels.
    pub fn confusion_csv(&self) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = String::from("true\\predicted");
        for l in &self.class_labels {
            out.push(',');
            out.push_str(&quote(l));
        }
        out.push('\n');
        for (label, row) in self.class_labels.iter().zip(&self.confusion) {
            out.push_str(&quote(label));
            for v in row {
                write!(out, ",{v}").expect("write to String");
            }
            out.push('\n');
        }
        out
    }

    /// Row-normalized confusion matrix as a binary greyscale PGM, `scale`
    /// pixels per cell; darker means more mass.
    pub fn confusion_pgm(&self, scale: usize) -> Vec<u8> {
        let n = self.confusion.len();
        let scale = scale.max(1);
        let side = n * scale;
        let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
        for r in 0..side {
            let row = &self.confusion[r / scale];
            let total: u64 = row.iter().sum();
            for c in 0..side {
                let share = if total == 0 {
                    0.0
                } else {
                    row[c / scale] as f64 / total as f64
                };
                out.push(255 - (share * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        write("report.json", self.to_json()?.as_bytes())?;
        write("confusion.csv", self.confusion_csv().as_bytes())?;
        write("confusion.pgm", &self.confusion_pgm(4))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(usize);
    impl Classifier<usize> for Constant {
        fn classify(&self, _: &usize) -> usize {
            self.0
        }
    }

    struct Oracle;
    impl Classifier<usize> for Oracle {
        fn classify(&self, x: &usize) -> usize {
            *x
        }
    }

    #[test]
    fn fold_sizes_and_determinism() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let a = kfold_assignment(&labels, 10, 3).unwrap();
        assert!(a.stratified);
        assert_eq!(a.sizes(), vec![10; 10]);
        assert_eq!(a, kfold_assignment(&labels, 10, 3).unwrap());
        assert_ne!(a, kfold_assignment(&labels, 10, 4).unwrap());
    }

    #[test]
    fn small_classes_fall_back() {
        let labels = vec![0, 0, 0, 1, 1, 1, 1, 2];
        let plan = kfold_assignment(&labels, 4, 0).unwrap();
        assert!(!plan.stratified);
        assert_eq!(plan.sizes(), vec![2; 4]);
        assert!(kfold_assignment(&labels, 9, 0).is_err());
        assert!(kfold_assignment(&labels, 1, 0).is_err());
    }

    #[test]
    fn perfect_stub_scores_one() {
        let xs: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let cv = cross_validate(&xs, &xs, 10, 1, |_, _, _, _| Ok(Oracle)).unwrap();
        assert_eq!(cv.avg_accuracy, 1.0);
        assert_eq!(cv.models.len(), 10);
    }

    #[test]
    fn best_fold_and_confusion() {
        let xs = vec![0, 1, 1, 2];
        let models: Vec<Box<dyn Classifier<usize>>> = vec![
            Box::new(Constant(0)),
            Box::new(Oracle),
            Box::new(Constant(1)),
        ];
        let r = evaluate(&models, &[0.6, 0.7, 0.65], &xs, &xs, 3).unwrap();
        assert_eq!(r.best_fold, 1);
        assert_eq!(r.best_test_accuracy, 1.0);
        assert_eq!(
            r.confusion,
            vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]
        );
        assert!((r.avg_cv_accuracy - 0.65).abs() < 1e-12);
        for (row, total) in r.confusion.iter().zip([1, 2, 1]) {
            assert_eq!(row.iter().sum::<u64>(), total);
        }
    }

    #[test]
    fn constant_predictor() {
        let xs = vec![0, 0, 1, 2];
        let r = evaluate(&[Constant(0)], &[], &xs, &xs, 3).unwrap();
        assert_eq!(r.best_test_accuracy, 0.5);
        assert!(r.confusion.iter().all(|row| row[1] == 0 && row[2] == 0));
        assert_eq!(r.per_class_top1, vec![Some(1.0), Some(0.0), Some(0.0)]);
        let empty: Vec<usize> = Vec::new();
        assert!(matches!(
            evaluate(&[Oracle], &[], &empty, &empty, 3),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn exports() {
        let xs = vec![0, 1];
        let r = evaluate(&[Oracle], &[1.0], &xs, &xs, NUM_CLASSES).unwrap();
        let csv = r.confusion_csv();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("true\\predicted,W1 Father,W2 Relative"));
        assert_eq!(csv.lines().count(), NUM_CLASSES + 1);
        let pgm = r.confusion_pgm(2);
        let head = format!("P5\n{0} {0}\n255\n", NUM_CLASSES * 2);
        assert_eq!(pgm.len(), head.len() + (NUM_CLASSES * 2).pow(2));
        let back: EvalReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
