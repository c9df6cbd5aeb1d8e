//! Rule and model types plus forward inference.
//!
//! A rule is an ellipsoid in arbitrary position (center and inverse
//! dispersion) paired with a hyperplane consequent that maps the extended
//! input `(1, x)` to one output per class. A model blends its rules by
//! normalized firing strength and predicts the class with the largest output.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub center: DVector<f64>,
    /// Inverse dispersion (precision) matrix of the ellipsoid.
    pub inv_dispersion: DMatrix<f64>,
    pub population: f64,
    /// `(u + 1) x M` hyperplane weights; row 0 is the intercept.
    pub consequent: DMatrix<f64>,
    /// Confidence in `[0, 1]`, inherited from the source model's accuracy.
    pub weight: f64,
}

impl Rule {
    /// A rule spawned at `x` with isotropic precision `scale * I` whose
    /// consequent outputs the one-hot vector of `label` everywhere.
    pub fn spawn(x: &[f64], label: usize, num_classes: usize, scale: f64) -> Self {
        let u = x.len();
        let mut consequent = DMatrix::zeros(u + 1, num_classes);
        consequent[(0, label)] = 1.0;
        Rule {
            center: DVector::from_column_slice(x),
            inv_dispersion: DMatrix::identity(u, u) * scale,
            population: 1.0,
            consequent,
            weight: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_classes(&self) -> usize {
        self.consequent.ncols()
    }

    /// Squared Mahalanobis distance `(x - c)^T S (x - c)`, clamped at zero.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self.mahalanobis_sq_unchecked(x))
    }

    pub(crate) fn mahalanobis_sq_unchecked(&self, x: &[f64]) -> f64 {
        let u = x.len();
        let c = self.center.as_slice();
        let mut acc = 0.0;
        for i in 0..u {
            let mut row = 0.0;
            for j in 0..u {
                row += self.inv_dispersion[(i, j)] * (x[j] - c[j]);
            }
            acc += (x[i] - c[i]) * row;
        }
        acc.max(0.0)
    }

    /// Hyperplane output `x_e^T W` for the extended input `x_e = (1, x)`.
    pub fn local_output(&self, x: &[f64]) -> Vec<f64> {
        let m = self.num_classes();
        let mut out = vec![0.0; m];
        for (c, o) in out.iter_mut().enumerate() {
            let mut v = self.consequent[(0, c)];
            for (j, xj) in x.iter().enumerate() {
                v += self.consequent[(j + 1, c)] * xj;
            }
            *o = v;
        }
        out
    }

    /// Checks the structural invariants: matching shapes, symmetric positive
    /// definite precision, and a weight in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let u = self.input_dim();
        if self.inv_dispersion.nrows() != u || self.inv_dispersion.ncols() != u {
            return Err(Error::DimensionMismatch {
                expected: u,
                actual: self.inv_dispersion.nrows(),
            });
        }
        check_dim(u + 1, self.consequent.nrows())?;
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::InvalidConfig(format!(
                "rule weight {} outside [0, 1]",
                self.weight
            )));
        }
        if max_asymmetry(&self.inv_dispersion) > 1e-9 {
            return Err(Error::NotPositiveDefinite);
        }
        Cholesky::new(self.inv_dispersion.clone()).ok_or(Error::NotPositiveDefinite)?;
        Ok(())
    }
}

/// Gaussian activation `exp(-d^2 / 2)` over the Mahalanobis distance.
///
/// Underflow is clamped to the smallest positive normal so the result stays
/// in `(0, 1]`.
pub fn firing_strength(rule: &Rule, x: &[f64]) -> Result<f64> {
    let d2 = rule.mahalanobis_sq(x)?;
    Ok((-0.5 * d2).exp().max(f64::MIN_POSITIVE))
}

/// `det(S)^(-1/2)` for a precision matrix `S`; the unit-ball constant is
/// omitted.
pub fn rule_volume(rule: &Rule) -> Result<f64> {
    volume_of(&rule.inv_dispersion)
}

pub(crate) fn volume_of(inv_dispersion: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(inv_dispersion.clone()).ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l_dirty();
    let mut log_det_half = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        log_det_half += d.ln();
    }
    Ok((-log_det_half).exp())
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteInput { index }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_label: usize,
    pub scores: Vec<f64>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub rules: Vec<Rule>,
    pub training_accuracy: f64,
    pub input_dim: usize,
    pub num_classes: usize,
    pub partition_id: usize,
    pub samples_seen: u64,
    pub samples_trained: u64,
}

impl Model {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        Model {
            rules: Vec::new(),
            training_accuracy: 0.0,
            input_dim,
            num_classes,
            partition_id: 0,
            samples_seen: 0,
            samples_trained: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn total_population(&self) -> f64 {
        self.rules.iter().map(|r| r.population).sum()
    }

    /// Squared Mahalanobis distance from `x` to every rule.
    pub fn distances_sq(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim, x.len())?;
        Ok(self
            .rules
            .iter()
            .map(|r| r.mahalanobis_sq_unchecked(x))
            .collect())
    }

    /// Normalized firing strengths; they sum to one.
    pub fn normalized_activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.rules.is_empty() {
            return Err(Error::EmptyModel);
        }
        Ok(normalize_from_distances(&self.distances_sq(x)?))
    }

    pub fn infer(&self, x: &[f64]) -> Result<Prediction> {
        infer(self, x)
    }
}

/// Normalized Gaussian activations computed in the log domain so that far
/// away inputs still produce a proper distribution over rules.
pub(crate) fn normalize_from_distances(d2: &[f64]) -> Vec<f64> {
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lambdas: Vec<f64> = d2.iter().map(|d| (-0.5 * (d - min)).exp()).collect();
    let total: f64 = lambdas.iter().sum();
    for l in &mut lambdas {
        *l /= total;
    }
    lambdas
}

/// Blends each rule's hyperplane output by its normalized firing strength
/// and picks the class with the largest blended output.
pub fn infer(model: &Model, x: &[f64]) -> Result<Prediction> {
    if model.rules.is_empty() {
        return Err(Error::EmptyModel);
    }
    check_dim(model.input_dim, x.len())?;
    check_finite(x)?;
    let lambdas = model.normalized_activations(x)?;
    Ok(blend(model, x, &lambdas))
}

/// Prediction from precomputed normalized activations.
pub(crate) fn blend(model: &Model, x: &[f64], lambdas: &[f64]) -> Prediction {
    let mut scores = vec![0.0; model.num_classes];
    for (rule, lambda) in model.rules.iter().zip(lambdas) {
        for (c, s) in scores.iter_mut().enumerate() {
            let mut v = rule.consequent[(0, c)];
            for (j, xj) in x.iter().enumerate() {
                v += rule.consequent[(j + 1, c)] * xj;
            }
            *s += lambda * v;
        }
    }
    Prediction {
        class_label: argmax(&scores),
        scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rule_1d(center: f64, precision: f64, w: &[[f64; 2]; 2]) -> Rule {
        Rule {
            center: DVector::from_vec(vec![center]),
            inv_dispersion: DMatrix::from_element(1, 1, precision),
            population: 1.0,
            consequent: DMatrix::from_row_slice(2, 2, &[w[0][0], w[0][1], w[1][0], w[1][1]]),
            weight: 1.0,
        }
    }

    #[test]
    fn firing_strength_examples() {
        let r = Rule::spawn(&[0.0], 0, 2, 1.0);
        assert_eq!(firing_strength(&r, &[0.0]).unwrap(), 1.0);
        assert_relative_eq!(firing_strength(&r, &[1.0]).unwrap(), (-0.5f64).exp());
        assert_relative_eq!(firing_strength(&r, &[1.0]).unwrap(), 0.6065, epsilon = 1e-4);

        let r2 = Rule::spawn(&[0.0, 0.0], 0, 2, 1.0);
        assert_relative_eq!(
            firing_strength(&r2, &[3.0, 4.0]).unwrap(),
            (-12.5f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn firing_strength_rejects_wrong_dimension() {
        let r = Rule::spawn(&[0.0, 0.0], 0, 2, 1.0);
        match firing_strength(&r, &[1.0]) {
            Err(Error::DimensionMismatch { expected, actual }) => {
                assert_eq!((expected, actual), (2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn far_input_stays_positive() {
        let r = Rule::spawn(&[0.0], 0, 2, 1.0);
        let f = firing_strength(&r, &[1e6]).unwrap();
        assert!(f > 0.0 && f <= 1.0);
    }

    #[test]
    fn single_rule_intercept_only() {
        let mut model = Model::new(3, 4);
        model.rules.push(Rule::spawn(&[0.5, -1.0, 2.0], 0, 4, 1.0));
        let p = infer(&model, &[9.0, 9.0, 9.0]).unwrap();
        assert_eq!(p.class_label, 0);
        assert_eq!(p.scores, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn duplicate_rules_are_idempotent() {
        let r = rule_1d(0.3, 2.0, &[[0.2, 0.1], [0.5, -0.4]]);
        let mut one = Model::new(1, 2);
        one.rules.push(r.clone());
        let mut two = one.clone();
        two.rules.push(r);
        for x in [-2.0, 0.0, 0.7, 5.0] {
            let a = infer(&one, &[x]).unwrap();
            let b = infer(&two, &[x]).unwrap();
            assert_eq!(a.class_label, b.class_label);
            for (sa, sb) in a.scores.iter().zip(&b.scores) {
                assert_relative_eq!(sa, sb, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn two_rule_blend_matches_direct_evaluation() {
        let r1 = rule_1d(-1.0, 1.0, &[[1.0, 0.0], [0.5, -0.5]]);
        let r2 = rule_1d(2.0, 0.25, &[[0.0, 1.0], [-0.2, 0.3]]);
        let mut model = Model::new(1, 2);
        model.rules.push(r1);
        model.rules.push(r2);
        let x = 0.4f64;

        // Spreadsheet-style: phi_i, lambda_i, then sum of lambda_i * (w0 + w1 x).
        let phi1 = (-0.5 * 1.0 * (x + 1.0).powi(2)).exp();
        let phi2 = (-0.5 * 0.25 * (x - 2.0).powi(2)).exp();
        let l1 = phi1 / (phi1 + phi2);
        let l2 = phi2 / (phi1 + phi2);
        let y0 = l1 * (1.0 + 0.5 * x) + l2 * (0.0 - 0.2 * x);
        let y1 = l1 * (0.0 - 0.5 * x) + l2 * (1.0 + 0.3 * x);

        let p = infer(&model, &[x]).unwrap();
        assert_relative_eq!(p.scores[0], y0, epsilon = 1e-14);
        assert_relative_eq!(p.scores[1], y1, epsilon = 1e-14);
        assert_eq!(p.class_label, if y0 >= y1 { 0 } else { 1 });
    }

    #[test]
    fn infer_errors() {
        let model = Model::new(2, 2);
        assert!(matches!(infer(&model, &[0.0, 0.0]), Err(Error::EmptyModel)));
        let mut model = Model::new(2, 2);
        model.rules.push(Rule::spawn(&[0.0, 0.0], 1, 2, 1.0));
        assert!(matches!(
            infer(&model, &[f64::NAN, 0.0]),
            Err(Error::NonFiniteInput { index: 0 })
        ));
        assert!(matches!(
            infer(&model, &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn volume_examples() {
        for u in 1..5 {
            let r = Rule::spawn(&vec![0.0; u], 0, 2, 1.0);
            assert_relative_eq!(rule_volume(&r).unwrap(), 1.0, epsilon = 1e-15);
        }
        let mut r = Rule::spawn(&[0.0, 0.0], 0, 2, 1.0);
        r.inv_dispersion = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.25]));
        assert_relative_eq!(rule_volume(&r).unwrap(), 1.0, epsilon = 1e-15);
        r.inv_dispersion = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / 9.0, 0.25]));
        assert_relative_eq!(rule_volume(&r).unwrap(), 6.0, epsilon = 1e-12);
        r.inv_dispersion = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(rule_volume(&r), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn validate_catches_bad_rules() {
        let mut r = Rule::spawn(&[0.0, 0.0], 0, 2, 1.0);
        r.validate().unwrap();
        r.weight = 1.5;
        assert!(r.validate().is_err());
        r.weight = 0.5;
        r.inv_dispersion[(0, 1)] = 0.3;
        assert!(r.validate().is_err());
    }
}
