//! Downstream evaluation: a multinomial logistic regression classifier,
//! stratified k-fold cross validation, ensemble accuracy over seeds and the
//! time needed to reach an accuracy threshold.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::math;
use crate::seed::rng_for;

/// A fitted model that maps a feature vector to a class index.
pub trait Predictor {
    fn predict(&self, x: &[f64]) -> usize;
}

/// Anything that can be trained on labelled feature vectors. Lets a
/// different classifier replace [`LogisticRegression`] in the harness.
pub trait Classifier {
    fn fit(&self, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<Box<dyn Predictor>>;
}

/// Softmax regression on standardized features, fit by full-batch gradient
/// descent from zero weights. Deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticRegression {
    pub l2: f64,
    pub learning_rate: f64,
    pub iterations: usize,
}

impl Default for LogisticRegression {
    fn default() -> Self {
        LogisticRegression {
            l2: 1e-3,
            learning_rate: 0.5,
            iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    mean: Vec<f64>,
    /// Reciprocal standard deviation, 0 for constant features.
    inv_std: Vec<f64>,
    /// `n_classes × dim`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    n_classes: usize,
}

impl SoftmaxModel {
    fn standardize(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (x[j] - self.mean[j]) * self.inv_std[j];
        }
    }

    fn logits(&self, z: &[f64], out: &mut [f64]) {
        let d = z.len();
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * d..(c + 1) * d];
            *o = self.bias[c] + w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(xs: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = math::exp(*x - m);
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

impl Predictor for SoftmaxModel {
    fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; x.len()];
        self.standardize(x, &mut z);
        let mut logits = vec![0.0; self.n_classes];
        self.logits(&z, &mut logits);
        argmax(&logits)
    }
}

impl LogisticRegression {
    pub fn fit_softmax(&self, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<SoftmaxModel> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows for {} labels",
                x.len(),
                y.len()
            )));
        }
        if n_classes < 2 || y.iter().any(|&c| c >= n_classes) {
            return Err(Error::InvalidArgument("labels need at least two classes".to_string()));
        }
        let n = x.len();
        let d = x[0].len();
        if x.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged feature rows".to_string()));
        }
        let mut mean = vec![0.0; d];
        let mut inv_std = vec![0.0; d];
        for j in 0..d {
            let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            let (m, _) = math::mean_std(&col);
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean[j] = m;
            inv_std[j] = if var > 1e-24 { 1.0 / math::sqrt(var) } else { 0.0 };
        }
        let mut model = SoftmaxModel {
            mean,
            inv_std,
            weights: vec![0.0; n_classes * d],
            bias: vec![0.0; n_classes],
            n_classes,
        };
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| {
                let mut out = vec![0.0; d];
                model.standardize(r, &mut out);
                out
            })
            .collect();
        let mut grad_w = vec![0.0; n_classes * d];
        let mut grad_b = vec![0.0; n_classes];
        let mut p = vec![0.0; n_classes];
        let scale = 1.0 / n as f64;
        for _ in 0..self.iterations {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for (zi, &yi) in z.iter().zip(y) {
                model.logits(zi, &mut p);
                softmax_in_place(&mut p);
                p[yi] -= 1.0;
                for c in 0..n_classes {
                    grad_b[c] += p[c];
                    let g = &mut grad_w[c * d..(c + 1) * d];
                    for (gj, zj) in g.iter_mut().zip(zi) {
                        *gj += p[c] * zj;
                    }
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= self.learning_rate * (g * scale + self.l2 * *w);
            }
            for (b, g) in model.bias.iter_mut().zip(&grad_b) {
                *b -= self.learning_rate * g * scale;
            }
        }
        if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier weights".to_string()));
        }
        Ok(model)
    }
}

impl Classifier for LogisticRegression {
    fn fit(&self, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.fit_softmax(x, y, n_classes)?))
    }
}

/// Fold membership for every sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    pub assignment: Vec<usize>,
    pub k: usize,
    /// False when some class had fewer members than folds and the split fell
    /// back to a plain shuffled one.
    pub stratified: bool,
}

/// Stratified split: each class is shuffled under `seed` and dealt to folds
/// round-robin, continuing where the previous class stopped.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Folds> {
    if k < 2 {
        return Err(Error::InvalidArgument("need at least two folds".to_string()));
    }
    if labels.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut rng = rng_for(seed, "folds", 0);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let stratified = by_class.values().all(|m| m.len() >= k);
    let groups: Vec<Vec<usize>> = if stratified {
        by_class.into_values().collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for mut members in groups {
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok(Folds {
        assignment,
        k,
        stratified,
    })
}

/// Mean accuracy over the folds, each scored by a classifier fit on the
/// others.
pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[usize],
    folds: &Folds,
    classifier: &dyn Classifier,
) -> Result<f64> {
    if x.len() != y.len() || folds.assignment.len() != y.len() {
        return Err(Error::InvalidArgument(
            "features, labels and folds differ in length".to_string(),
        ));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    let mut used = 0;
    for fold in 0..folds.k {
        let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..y.len() {
            if folds.assignment[i] == fold {
                vx.push(&x[i]);
                vy.push(y[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(y[i]);
            }
        }
        if vy.is_empty() {
            continue;
        }
        let model = classifier.fit(&tx, &ty, n_classes.max(2))?;
        let hits = vx
            .iter()
            .zip(&vy)
            .filter(|(xi, &yi)| model.predict(xi) == yi)
            .count();
        total += hits as f64 / vy.len() as f64;
        used += 1;
    }
    Ok(total / used as f64)
}

/// Accuracy over time for one trained model: `(seconds, accuracy)` at epoch
/// ends.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Curve {
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    /// Accuracy of the last epoch finished by time `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.points
            .iter()
            .take_while(|(time, _)| *time <= t)
            .last()
            .map(|(_, a)| *a)
    }
}

/// Mean over the seed curves at time `t`; `None` until every seed has a point.
pub fn ensemble_accuracy(curves: &[Curve], t: f64) -> Option<f64> {
    if curves.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for c in curves {
        total += c.at(t)?;
    }
    Some(total / curves.len() as f64)
}

/// The ensemble curve evaluated at every time where some seed finished an
/// epoch, skipping times where it is undefined.
pub fn ensemble_curve(curves: &[Curve]) -> Curve {
    let mut times: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.0))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    Curve {
        points: times
            .into_iter()
            .filter_map(|t| ensemble_accuracy(curves, t).map(|a| (t, a)))
            .collect(),
    }
}

/// Threshold as a fraction of the baseline's final ensemble accuracy.
pub const THRESHOLD_FRACTION: f64 = 0.95;

pub fn alpha_star(baseline_final: f64) -> f64 {
    THRESHOLD_FRACTION * baseline_final
}

/// First time the curve reaches `alpha`.
pub fn first_crossing(curve: &Curve, alpha: f64) -> Option<f64> {
    curve.points.iter().find(|(_, a)| *a >= alpha).map(|p| p.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    /// `(ratio, t*(T, r))` per ratio.
    pub per_ratio: Vec<(f64, Option<f64>)>,
    /// `t*(T)`: the fastest ratio's time.
    pub best_time: Option<f64>,
    /// `r*(T)`; ties go to the ratio listed first.
    pub best_ratio: Option<f64>,
}

/// `t*` per ratio from each ratio's ensemble curve, and the minimum over
/// ratios.
pub fn time_to_threshold(curves: &[(f64, Curve)], alpha: f64) -> Threshold {
    let per_ratio: Vec<(f64, Option<f64>)> = curves
        .iter()
        .map(|(r, c)| (*r, first_crossing(c, alpha)))
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for &(r, t) in &per_ratio {
        if let Some(t) = t {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, r));
            }
        }
    }
    Threshold {
        per_ratio,
        best_time: best.map(|b| b.0),
        best_ratio: best.map(|b| b.1),
    }
}
