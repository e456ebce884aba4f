//! B-spline basis evaluation and least-squares curve fitting.
//!
//! Cox-de Boor recursion over an extended uniform knot grid; this is the
//! univariate machinery behind every learnable edge function.

use std::fmt;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum SplineError {
    /// Knots not strictly increasing, or too few of them.
    DegenerateGrid { reason: String },
    /// Coefficient / basis length disagreement.
    ShapeMismatch { coef: usize, basis: usize },
    /// Normal equations unsolvable even after ridge damping, or too few samples.
    RankDeficient { reason: String },
    /// Degree or interval count outside the supported range.
    BadSpec { reason: String },
}

impl fmt::Display for SplineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplineError::DegenerateGrid { reason } => write!(f, "degenerate grid: {reason}"),
            SplineError::ShapeMismatch { coef, basis } => {
                write!(f, "coefficient length {coef} != basis length {basis}")
            }
            SplineError::RankDeficient { reason } => write!(f, "rank deficient: {reason}"),
            SplineError::BadSpec { reason } => write!(f, "bad grid spec: {reason}"),
        }
    }
}

impl std::error::Error for SplineError {}

/// Uniform-grid hyperparameters: `intervals` interior intervals of degree
/// `degree` over `[t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub intervals: usize,
    pub degree: usize,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        // G=5 cubic splines on [-1, 1]; inputs are squashed upstream.
        GridSpec {
            intervals: 5,
            degree: 3,
            t_min: -1.0,
            t_max: 1.0,
        }
    }
}

/// Extended knot grid: `degree` padding knots on each side of the interior
/// range, so `basis_count = intervals + degree` splines cover it.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T: Scalar> {
    knots: Vec<T>,
    degree: usize,
}

impl<T: Scalar> Grid<T> {
    pub fn uniform(spec: GridSpec) -> Result<Self, SplineError> {
        if spec.degree < 1 {
            return Err(SplineError::BadSpec {
                reason: "degree must be >= 1".into(),
            });
        }
        if spec.intervals < 1 {
            return Err(SplineError::BadSpec {
                reason: "need at least one interval".into(),
            });
        }
        if !(spec.t_min < spec.t_max) {
            return Err(SplineError::BadSpec {
                reason: format!("t_min {} must be < t_max {}", spec.t_min, spec.t_max),
            });
        }
        let h = (spec.t_max - spec.t_min) / spec.intervals as f64;
        let count = spec.intervals + 1 + 2 * spec.degree;
        let mut knots = Vec::with_capacity(count);
        for i in 0..count {
            let pos = spec.t_min + h * (i as f64 - spec.degree as f64);
            knots.push(T::lit(pos));
        }
        Grid::from_knots(knots, spec.degree)
    }

    pub fn from_knots(knots: Vec<T>, degree: usize) -> Result<Self, SplineError> {
        if degree < 1 {
            return Err(SplineError::BadSpec {
                reason: "degree must be >= 1".into(),
            });
        }
        if knots.len() < 2 * degree + 2 {
            return Err(SplineError::DegenerateGrid {
                reason: format!(
                    "need at least {} knots for degree {degree}, got {}",
                    2 * degree + 2,
                    knots.len()
                ),
            });
        }
        for w in knots.windows(2) {
            if !(w[0] < w[1]) {
                return Err(SplineError::DegenerateGrid {
                    reason: format!("knots not strictly increasing at {:?} -> {:?}", w[0], w[1]),
                });
            }
        }
        Ok(Grid { knots, degree })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Number of basis functions (`G + k` on a uniform grid).
    pub fn basis_count(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Interior range start (first non-padding knot).
    pub fn t_min(&self) -> T {
        self.knots[self.degree]
    }

    /// Interior range end (last non-padding knot).
    pub fn t_max(&self) -> T {
        self.knots[self.knots.len() - 1 - self.degree]
    }

    /// Clamp to the interior range; the flag reports whether clamping fired.
    pub fn clamp(&self, x: T) -> (T, bool) {
        if x < self.t_min() {
            (self.t_min(), true)
        } else if x > self.t_max() {
            (self.t_max(), true)
        } else {
            (x, false)
        }
    }

    /// Index of the knot span containing `x` (after clamping), restricted to
    /// spans with full basis support: `degree <= span <= basis_count - 1`.
    fn span(&self, x: T) -> usize {
        let lo = self.degree;
        let hi = self.basis_count() - 1;
        // x == t_max maps into the last interior span.
        if x >= self.knots[hi] {
            return hi;
        }
        let mut s = lo;
        while s < hi && !(x < self.knots[s + 1]) {
            s += 1;
        }
        s
    }

    /// Non-zero basis values `N[span-degree ..= span]` at `x` (de Boor).
    fn basis_nonzero(&self, x: T, degree: usize, span: usize) -> Vec<T> {
        let mut values = vec![T::zero(); degree + 1];
        values[0] = T::one();
        let mut left = vec![T::zero(); degree + 1];
        let mut right = vec![T::zero(); degree + 1];
        for d in 1..=degree {
            left[d] = x - self.knots[span + 1 - d];
            right[d] = self.knots[span + d] - x;
            let mut saved = T::zero();
            for r in 0..d {
                let denom = right[r + 1] + left[d - r];
                let tmp = values[r] / denom;
                values[r] = saved + right[r + 1] * tmp;
                saved = left[d - r] * tmp;
            }
            values[d] = saved;
        }
        values
    }

    /// All `basis_count` basis values at `x` (clamped to the interior range).
    pub fn basis(&self, x: T) -> Vec<T> {
        let (x, _) = self.clamp(x);
        let span = self.span(x);
        let nz = self.basis_nonzero(x, self.degree, span);
        let mut out = vec![T::zero(); self.basis_count()];
        for (r, v) in nz.into_iter().enumerate() {
            out[span - self.degree + r] = v;
        }
        out
    }

    /// Basis values and their derivatives w.r.t. `x`. Outside the interior
    /// range the derivative is zero (the clamp is flat there).
    pub fn basis_with_derivative(&self, x: T) -> (Vec<T>, Vec<T>) {
        let (xc, clamped) = self.clamp(x);
        let span = self.span(xc);
        let k = self.degree;
        let m = self.basis_count();

        let mut basis = vec![T::zero(); m];
        for (r, v) in self.basis_nonzero(xc, k, span).into_iter().enumerate() {
            basis[span - k + r] = v;
        }

        let mut deriv = vec![T::zero(); m];
        if !clamped {
            // Degree k-1 values at the same span feed the derivative rule
            //   B'_{i,k} = k * ( N_{i,k-1}/(t_{i+k}-t_i) - N_{i+1,k-1}/(t_{i+k+1}-t_{i+1}) ).
            let mut lower = vec![T::zero(); m + 1];
            if k == 1 {
                lower[span] = T::one();
            } else {
                for (r, v) in self.basis_nonzero(xc, k - 1, span).into_iter().enumerate() {
                    lower[span - (k - 1) + r] = v;
                }
            }
            let kf = T::lit(k as f64);
            for i in span - k..=span {
                let a = lower[i] / (self.knots[i + k] - self.knots[i]);
                let b = lower[i + 1] / (self.knots[i + k + 1] - self.knots[i + 1]);
                deriv[i] = kf * (a - b);
            }
        }
        (basis, deriv)
    }
}

/// Inner product of coefficients with basis values.
pub fn spline_eval<T: Scalar>(coef: &[T], basis: &[T]) -> Result<T, SplineError> {
    if coef.len() != basis.len() {
        return Err(SplineError::ShapeMismatch {
            coef: coef.len(),
            basis: basis.len(),
        });
    }
    let mut acc = T::zero();
    for (&c, &b) in coef.iter().zip(basis) {
        acc += c * b;
    }
    Ok(acc)
}

/// Spline value at `x`: `dot(coef, basis(x))`.
pub fn spline_value<T: Scalar>(grid: &Grid<T>, coef: &[T], x: T) -> Result<T, SplineError> {
    spline_eval(coef, &grid.basis(x))
}

/// Re-express a spline on a new grid: sample the old curve densely and fit
/// coefficients on the target grid. This is the adaptive-refit hook; no
/// training path calls it unless explicitly asked.
pub fn refit_grid<T: Scalar>(
    old_grid: &Grid<T>,
    old_coef: &[T],
    new_grid: &Grid<T>,
) -> Result<Vec<T>, SplineError> {
    if old_coef.len() != old_grid.basis_count() {
        return Err(SplineError::ShapeMismatch {
            coef: old_coef.len(),
            basis: old_grid.basis_count(),
        });
    }
    // sample only where both grids are defined; chasing the old grid's
    // flat clamped extension would distort the fit near the boundary
    let lo = new_grid.t_min().max(old_grid.t_min());
    let hi = new_grid.t_max().min(old_grid.t_max());
    if !(lo < hi) {
        return Err(SplineError::BadSpec {
            reason: "grids do not overlap".into(),
        });
    }
    let n = (new_grid.basis_count() * 16).max(256);
    let step = (hi - lo) / T::lit((n - 1) as f64);
    let samples: Vec<(T, T)> = (0..n)
        .map(|i| {
            let x = lo + step * T::lit(i as f64);
            let y = spline_value(old_grid, old_coef, x).expect("length checked");
            (x, y)
        })
        .collect();
    fit_coef_lsq(&samples, new_grid)
}

/// Least-squares coefficient fit via ridge-damped normal equations.
pub fn fit_coef_lsq<T: Scalar>(samples: &[(T, T)], grid: &Grid<T>) -> Result<Vec<T>, SplineError> {
    let m = grid.basis_count();
    if samples.len() < m {
        return Err(SplineError::RankDeficient {
            reason: format!("{} samples for {m} coefficients", samples.len()),
        });
    }
    let mut normal = vec![T::zero(); m * m];
    let mut rhs = vec![T::zero(); m];
    for &(x, y) in samples {
        let basis = grid.basis(x);
        for i in 0..m {
            if basis[i] == T::zero() {
                continue;
            }
            rhs[i] += y * basis[i];
            for j in 0..m {
                normal[i * m + j] += basis[i] * basis[j];
            }
        }
    }
    let ridge = T::lit(1e-8);
    for i in 0..m {
        normal[i * m + i] += ridge;
    }
    crate::linalg::cholesky_solve(&normal, &rhs, m).ok_or_else(|| SplineError::RankDeficient {
        reason: "normal equations singular after ridge".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(g: usize, k: usize) -> Grid<f64> {
        Grid::uniform(GridSpec {
            intervals: g,
            degree: k,
            t_min: -1.0,
            t_max: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn knot_count_and_basis_count() {
        let gr = grid(5, 3);
        assert_eq!(gr.knots().len(), 5 + 1 + 6);
        assert_eq!(gr.basis_count(), 8);
        assert_eq!(gr.t_min(), -1.0);
        assert_eq!(gr.t_max(), 1.0);
    }

    #[test]
    fn rejects_non_increasing_knots() {
        let err = Grid::from_knots(vec![0.0, 1.0, 1.0, 2.0, 3.0, 4.0], 1).unwrap_err();
        assert!(matches!(err, SplineError::DegenerateGrid { .. }));
    }

    #[test]
    fn degree_one_hat_at_knot() {
        // k=1: the hat centred on an interior knot is exactly 1 there.
        let gr = grid(4, 1);
        let basis = gr.basis(-0.5);
        let ones: Vec<usize> = basis
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ones.len(), 1);
        assert_eq!(basis[ones[0]], 1.0);
    }

    #[test]
    fn degree_one_midpoint_splits_evenly() {
        let gr = grid(4, 1);
        let basis = gr.basis(-0.25); // midway between -0.5 and 0.0
        let nz: Vec<f64> = basis.iter().copied().filter(|&v| v != 0.0).collect();
        assert_eq!(nz, vec![0.5, 0.5]);
    }

    #[test]
    fn partition_of_unity_cubic() {
        let gr = grid(5, 3);
        for i in 0..=200 {
            let x = -1.0 + 2.0 * i as f64 / 200.0;
            let s: f64 = gr.basis(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "sum {s} at x={x}");
        }
    }

    #[test]
    fn local_support_is_exact() {
        let gr = grid(5, 2);
        let k = gr.degree();
        let knots = gr.knots().to_vec();
        for i in 0..=400 {
            let x = -1.0 + 2.0 * i as f64 / 400.0;
            let basis = gr.basis(x);
            for (b, &v) in basis.iter().enumerate() {
                let inside = x >= knots[b] && x <= knots[b + k + 1];
                if !inside {
                    assert_eq!(v, 0.0, "basis {b} at x={x}");
                }
                assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn spline_eval_zero_and_constant() {
        let gr = grid(5, 3);
        let m = gr.basis_count();
        let basis = gr.basis(0.3);
        assert_eq!(spline_eval(&vec![0.0; m], &basis).unwrap(), 0.0);
        // constant coefficients reproduce the constant by partition of unity
        let c = 2.5;
        let v = spline_eval(&vec![c; m], &basis).unwrap();
        assert!((v - c).abs() < 1e-12);
    }

    #[test]
    fn spline_eval_length_mismatch() {
        let gr = grid(5, 3);
        let basis = gr.basis(0.0);
        assert!(matches!(
            spline_eval(&[1.0, 2.0], &basis),
            Err(SplineError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn fits_zero_target_to_zero() {
        let gr = grid(5, 3);
        let samples: Vec<(f64, f64)> = (0..64)
            .map(|i| (-1.0 + 2.0 * i as f64 / 63.0, 0.0))
            .collect();
        let coef = fit_coef_lsq(&samples, &gr).unwrap();
        for c in coef {
            assert!(c.abs() < 1e-8);
        }
    }

    #[test]
    fn reproduces_linear_function() {
        for k in 1..=3 {
            let gr = grid(5, k);
            let samples: Vec<(f64, f64)> = (0..1024)
                .map(|i| {
                    let x = -1.0 + 2.0 * i as f64 / 1023.0;
                    (x, x)
                })
                .collect();
            let coef = fit_coef_lsq(&samples, &gr).unwrap();
            for i in 0..=100 {
                let x = -1.0 + 2.0 * i as f64 / 100.0;
                let v = spline_value(&gr, &coef, x).unwrap();
                assert!((v - x).abs() < 1e-8, "k={k} x={x} v={v}");
            }
        }
    }

    #[test]
    fn fits_sine_accurately() {
        let gr = Grid::uniform(GridSpec {
            intervals: 8,
            degree: 3,
            t_min: -std::f64::consts::PI,
            t_max: std::f64::consts::PI,
        })
        .unwrap();
        let samples: Vec<(f64, f64)> = (0..64)
            .map(|i| {
                let x = -std::f64::consts::PI + std::f64::consts::TAU * i as f64 / 63.0;
                (x, x.sin())
            })
            .collect();
        let coef = fit_coef_lsq(&samples, &gr).unwrap();
        let mut sq = 0.0;
        for &(x, y) in &samples {
            let v = spline_value(&gr, &coef, x).unwrap();
            sq += (v - y) * (v - y);
        }
        let rmse = (sq / samples.len() as f64).sqrt();
        assert!(rmse < 1e-3, "rmse {rmse}");
    }

    #[test]
    fn underdetermined_fit_is_rank_deficient() {
        let gr = grid(5, 3);
        let samples = vec![(0.0, 1.0), (0.5, 2.0)];
        assert!(matches!(
            fit_coef_lsq(&samples, &gr),
            Err(SplineError::RankDeficient { .. })
        ));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for k in 1..=3 {
            let gr = grid(5, k);
            let coef: Vec<f64> = (0..gr.basis_count())
                .map(|i| (i as f64 * 0.7).sin())
                .collect();
            // generic interior points away from knots
            for i in 0..40 {
                let x = -0.97 + i as f64 * 0.0493;
                let h = 1e-6;
                let fp = spline_value(&gr, &coef, x + h).unwrap();
                let fm = spline_value(&gr, &coef, x - h).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let (_, deriv) = gr.basis_with_derivative(x);
                let an = spline_eval(&coef, &deriv).unwrap();
                assert!((fd - an).abs() < 1e-6, "k={k} x={x} fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn refit_preserves_curve_on_overlap() {
        let old = grid(5, 3);
        let samples: Vec<(f64, f64)> = (0..256)
            .map(|i| {
                let x = -1.0 + 2.0 * i as f64 / 255.0;
                (x, (2.0 * x).sin())
            })
            .collect();
        let coef = fit_coef_lsq(&samples, &old).unwrap();
        // refit onto a wider, finer grid
        let new = Grid::uniform(GridSpec {
            intervals: 8,
            degree: 3,
            t_min: -1.5,
            t_max: 1.5,
        })
        .unwrap();
        let new_coef = refit_grid(&old, &coef, &new).unwrap();
        for i in 0..=100 {
            let x = -1.0 + 2.0 * i as f64 / 100.0;
            let a = spline_value(&old, &coef, x).unwrap();
            let b = spline_value(&new, &new_coef, x).unwrap();
            assert!((a - b).abs() < 1e-3, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn clamp_reports_out_of_range() {
        let gr = grid(5, 3);
        assert_eq!(gr.clamp(-2.0), (-1.0, true));
        assert_eq!(gr.clamp(0.25), (0.25, false));
        assert_eq!(gr.clamp(7.0), (1.0, true));
        // clamped evaluation still sums to one
        let s: f64 = gr.basis(5.0).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        // and its derivative is flat
        let (_, d) = gr.basis_with_derivative(5.0);
        assert!(d.iter().all(|&v| v == 0.0));
    }
}
