use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Minimiser of ‖XW − y‖² + λ‖W‖² from the normal equations.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("ridge penalty {lambda} must be non-negative")));
    }
    let d = x.ncols();
    let mut a = x.tr_mul(x);
    for i in 0..d {
        a[(i, i)] += lambda;
    }
    let rhs = x.tr_mul(y);
    let singular = || {
        Error::Singular(format!(
            "normal equations of a {}x{d} design are singular at lambda {lambda}; use lambda > 0",
            x.nrows()
        ))
    };
    let chol = checked_cholesky(a).ok_or_else(singular)?;
    Ok(chol.solve(&rhs))
}

/// Cholesky factor, or `None` when a pivot is negligible next to the
/// largest one.
fn checked_cholesky(a: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let d = a.nrows();
    let chol = Cholesky::new(a)?;
    let l = chol.l_dirty();
    let (lo, hi) =
        (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if d > 0 && !(lo > 1e-13 * hi) {
        return None;
    }
    Some(chol)
}

/// Ridge regression with an unpenalised intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: DVector<f64>,
    pub bias: f64,
    pub lambda: f64,
}

fn centre(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = x.row_mean().transpose();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    (c, mean)
}

impl RidgeModel {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(invalid("ridge needs at least one sample"));
        }
        let (xc, mean) = centre(x);
        let y_mean = y.mean();
        let yc = y.add_scalar(-y_mean);
        let weights = fit_ridge(&xc, &yc, lambda)?;
        let bias = y_mean - mean.dot(&weights);
        Ok(Self { weights, bias, lambda })
    }

    /// Fits every candidate penalty and keeps the one with the smallest
    /// closed-form leave-one-out error.
    pub fn fit_loo(x: &DMatrix<f64>, y: &DVector<f64>, lambdas: &[f64]) -> Result<(Self, Vec<f64>)> {
        let n = x.nrows();
        if n < 3 {
            return Err(invalid("leave-one-out selection needs at least 3 samples"));
        }
        let (xc, _) = centre(x);
        let yc = y.add_scalar(-y.mean());
        let gram = xc.tr_mul(&xc);
        let mut errors = Vec::with_capacity(lambdas.len());
        let mut best: Option<(f64, f64)> = None;
        for &lambda in lambdas {
            let mut a = gram.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda;
            }
            let Some(chol) = checked_cholesky(a) else {
                errors.push(f64::INFINITY);
                continue;
            };
            let w = chol.solve(&xc.tr_mul(&yc));
            // H = 11ᵀ/n + Xc (XcᵀXc + λ)⁻¹ Xcᵀ
            let z = chol.solve(&xc.transpose());
            let mut sse = 0.0;
            for i in 0..n {
                let h = 1.0 / n as f64 + xc.row(i).dot(&z.column(i).transpose());
                let r = yc[i] - xc.row(i).dot(&w.transpose());
                // An interpolating fit has no usable leave-one-out error.
                if 1.0 - h < 1e-9 {
                    sse = f64::INFINITY;
                    break;
                }
                sse += (r / (1.0 - h)).powi(2);
            }
            let mse = sse / n as f64;
            errors.push(mse);
            if best.is_none_or(|(_, e)| mse < e) {
                best = Some((lambda, mse));
            }
        }
        let (lambda, _) = best.ok_or_else(|| Error::Singular("no usable ridge penalty".into()))?;
        Ok((Self::fit(x, y, lambda)?, errors))
    }

    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        self.weights.dot(x) + self.bias
    }

    pub fn predict_all(&self, x: &DMatrix<f64>) -> DVector<f64> {
        (x * &self.weights).add_scalar(self.bias)
    }
}

pub fn rmse(pred: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    ((pred - truth).norm_squared() / truth.len().max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmParams {
    /// Inverse regularisation strength; the per-sample penalty is 1/(c·n).
    pub c_reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c_reg: 10.0, epochs: 200, seed: 0 }
    }
}

/// One-vs-rest linear SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    /// classes × features.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    /// Summed training objective of the returned iterates after each epoch.
    pub objective_history: Vec<f64>,
}

impl LinearSvm {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn scores(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.weights * x + &self.bias
    }

    pub fn predict(&self, x: &DVector<f64>) -> usize {
        argmax(self.scores(x).as_slice())
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Regularised hinge objective of one binary problem; the bias is the
/// last entry of `w` and is penalised like the weights.
fn objective(w: &DVector<f64>, x: &DMatrix<f64>, y: &[f64], lambda: f64) -> f64 {
    let d = x.ncols();
    let hinge: f64 = (0..x.nrows())
        .map(|i| {
            let s = x.row(i).transpose().dot(&w.rows(0, d)) + w[d];
            (1.0 - y[i] * s).max(0.0)
        })
        .sum();
    0.5 * lambda * w.norm_squared() + hinge / x.nrows() as f64
}

/// Pegasos stochastic subgradient descent with iterate averaging. The
/// sample order is drawn once from `seed` and shared by all classes.
pub fn fit_linear_svm(x: &DMatrix<f64>, labels: &[usize], n_classes: usize, params: &SvmParams) -> Result<LinearSvm> {
    let (n, d) = x.shape();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{n} samples but {} labels", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(invalid(format!("label {l} outside {n_classes} classes")));
    }
    let mut present = vec![false; n_classes];
    labels.iter().for_each(|&l| present[l] = true);
    if n_classes < 2 || present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Dataset("linear SVM needs samples from at least two classes".into()));
    }
    if !(params.c_reg > 0.0) || params.epochs == 0 {
        return Err(invalid("SVM needs c_reg > 0 and at least one epoch"));
    }
    let lambda = 1.0 / (params.c_reg * n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let orders: Vec<Vec<usize>> = (0..params.epochs)
        .map(|_| {
            order.shuffle(&mut rng);
            order.clone()
        })
        .collect();
    let rows: Vec<DVector<f64>> = (0..n).map(|i| x.row(i).transpose()).collect();

    let mut weights = DMatrix::zeros(n_classes, d);
    let mut bias = DVector::zeros(n_classes);
    let mut history = vec![0.0; params.epochs];
    for class in 0..n_classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let mut w = DVector::<f64>::zeros(d + 1);
        let mut avg = DVector::<f64>::zeros(d + 1);
        let mut best = w.clone();
        let mut best_obj = objective(&best, x, &y, lambda);
        let radius = 1.0 / lambda.sqrt();
        let mut t = 0usize;
        for (epoch, order) in orders.iter().enumerate() {
            for &i in order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let margin = y[i] * (rows[i].dot(&w.rows(0, d)) + w[d]);
                w *= 1.0 - eta * lambda;
                if margin < 1.0 {
                    let mut head = w.rows_mut(0, d);
                    head.axpy(eta * y[i], &rows[i], 1.0);
                    w[d] += eta * y[i];
                }
                let norm = w.norm();
                if norm > radius {
                    w *= radius / norm;
                }
                avg += (&w - &avg) / t as f64;
            }
            let obj = objective(&avg, x, &y, lambda);
            if obj < best_obj {
                best_obj = obj;
                best.copy_from(&avg);
            }
            history[epoch] += best_obj;
        }
        weights.row_mut(class).copy_from(&best.rows(0, d).transpose());
        bias[class] = best[d];
    }
    Ok(LinearSvm { weights, bias, objective_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn orthonormal_design_gives_projection() {
        let x = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let w = fit_ridge(&x, &y, 0.0).unwrap();
        assert!((w - x.tr_mul(&y)).amax() < 1e-12);
    }

    #[test]
    fn planted_solution_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(40, 5, |_, _| rng.gen_range(-1.0..1.0));
        let w_true = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        let w = fit_ridge(&x, &(&x * &w_true), 0.0).unwrap();
        assert!((w - w_true).amax() < 1e-8);
    }

    #[test]
    fn huge_penalty_shrinks_to_zero_and_singular_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(fit_ridge(&x, &y, 0.0), Err(Error::Singular(_))));
        assert!(fit_ridge(&x, &y, 1e12).unwrap().amax() < 1e-9);
    }

    #[test]
    fn loo_picks_a_candidate_and_intercept_handles_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(50, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(50, |i, _| 5.0 + x[(i, 0)] - x[(i, 2)] + 0.01 * rng.gen_range(-1.0..1.0));
        let (m, errs) = RidgeModel::fit_loo(&x, &y, &[1e-6, 1e-3, 1.0, 100.0]).unwrap();
        assert_eq!(errs.len(), 4);
        assert!(m.lambda < 1.0);
        assert!((m.bias - 5.0).abs() < 0.02);
        let constant = DVector::from_element(50, 2.5);
        let c = RidgeModel::fit(&x, &constant, 1e-3).unwrap();
        assert!(rmse(&c.predict_all(&x), &constant) < 1e-12);
    }

    fn blobs(seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres = [(-2.0, 0.0), (2.0, 0.0), (0.0, 3.0)];
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (c, (cx, cy)) in centres.iter().enumerate() {
            for _ in 0..20 {
                data.push(cx + rng.gen_range(-0.5..0.5));
                data.push(cy + rng.gen_range(-0.5..0.5));
                labels.push(c);
            }
        }
        (DMatrix::from_row_slice(60, 2, &data), labels)
    }

    fn accuracy(m: &LinearSvm, x: &DMatrix<f64>, labels: &[usize]) -> f64 {
        let hits = (0..x.nrows()).filter(|&i| m.predict(&x.row(i).transpose()) == labels[i]).count();
        hits as f64 / labels.len() as f64
    }

    #[test]
    fn separable_blobs_fully_fitted_with_monotone_objective() {
        let (x, labels) = blobs(1);
        let m = fit_linear_svm(&x, &labels, 3, &SvmParams::default()).unwrap();
        assert_eq!(accuracy(&m, &x, &labels), 1.0);
        assert!(m.objective_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(m.n_parameters(), 9);
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = blobs(1);
        assert!(fit_linear_svm(&x, &vec![1; 60], 3, &SvmParams::default()).is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (x, labels) = blobs(5);
        let p = SvmParams { seed: 11, ..Default::default() };
        assert_eq!(fit_linear_svm(&x, &labels, 3, &p).unwrap(), fit_linear_svm(&x, &labels, 3, &p).unwrap());
    }
}
