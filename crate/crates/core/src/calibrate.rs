//! Exponential electrode calibration and the two non-network baselines.
//!
//! `fit_exponential` solves the log-linearized problem ln C = ln a + b V by
//! ordinary least squares. This weights relative rather than absolute
//! residuals, so on noisy data it does not coincide with a direct nonlinear
//! least-squares fit of C = a exp(b V); on noise-free data both agree.

use crate::chem::{calibration_forward, Calibration, ElectrodeSpec, IonSpecies};
use crate::error::{Error, Result};
use crate::nn::Dataset;
use crate::scalar::Scalar;

/// Number of monomials of degree <= 2 in four variables.
pub const QUADRATIC_TERMS: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFit<S> {
    pub ion: IonSpecies,
    /// mmol/L
    pub a: S,
    /// 1/V
    pub b: S,
    pub r_squared: S,
    pub n_points: usize,
}

impl<S: Scalar> CalibrationFit<S> {
    pub fn calibration(&self) -> Result<Calibration<S>> {
        Calibration::new(self.a, self.b)
    }

    pub fn apply_to(&self, electrode: &mut ElectrodeSpec<S>) -> Result<()> {
        electrode.set_calibration(self.calibration()?);
        Ok(())
    }
}

/// Coefficient of determination with the zero-variance convention:
/// if the data are constant, 1 when the fit is exact (to a few ulps) and 0 otherwise.
pub(crate) fn r_squared_about_mean<S: Scalar>(truth: &[S], fitted: &[S]) -> S {
    let n = S::lit(truth.len() as f64);
    let mean = truth.iter().copied().sum::<S>() / n;
    let ss_tot: S = truth.iter().map(|y| (*y - mean).powi(2)).sum();
    let ss_res: S = truth.iter().zip(fitted).map(|(y, f)| (*y - *f).powi(2)).sum();
    if ss_tot == S::zero() {
        let scale = truth.iter().fold(S::zero(), |m, y| m.max(y.abs()));
        let ulps = S::lit(4.0) * S::epsilon() * scale;
        if ss_res <= n * ulps * ulps {
            S::one()
        } else {
            S::zero()
        }
    } else {
        S::one() - ss_res / ss_tot
    }
}

/// Fits C = a exp(b V) to (V, C) pairs.
pub fn fit_exponential<S: Scalar>(ion: IonSpecies, points: &[(S, S)]) -> Result<CalibrationFit<S>> {
    if points.len() < 2 {
        return Err(Error::domain(format!(
            "exponential fit for {ion} needs at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some((_, c)) = points.iter().find(|(_, c)| !(*c > S::zero())) {
        return Err(Error::domain(format!(
            "exponential fit for {ion}: concentration {c} is not positive"
        )));
    }
    let n = S::lit(points.len() as f64);
    let v_mean = points.iter().map(|p| p.0).sum::<S>() / n;
    let l_mean = points.iter().map(|p| p.1.ln()).sum::<S>() / n;
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    for (v, c) in points {
        let dv = *v - v_mean;
        sxx += dv * dv;
        sxy += dv * (c.ln() - l_mean);
    }
    if sxx == S::zero() {
        return Err(Error::Rank(format!(
            "exponential fit for {ion}: all voltages are identical"
        )));
    }
    let b = sxy / sxx;
    let a = (l_mean - b * v_mean).exp();
    let truth: Vec<S> = points.iter().map(|p| p.1).collect();
    let fitted: Vec<S> = points.iter().map(|p| a * (b * p.0).exp()).collect();
    Ok(CalibrationFit {
        ion,
        a,
        b,
        r_squared: r_squared_about_mean(&truth, &fitted),
        n_points: points.len(),
    })
}

/// Applies each electrode's own calibration curve independently.
pub fn ten_point_calibration<S: Scalar>(electrodes: &[ElectrodeSpec<S>], voltages: &[S]) -> Result<Vec<S>> {
    if electrodes.len() != voltages.len() {
        return Err(Error::domain(format!(
            "{} voltages for {} electrodes",
            voltages.len(),
            electrodes.len()
        )));
    }
    electrodes
        .iter()
        .zip(voltages)
        .map(|(e, v)| calibration_forward(e, *v))
        .collect()
}

/// Builds calibrated electrodes from one fit per channel, matching by ion.
pub fn calibrated_electrodes<S: Scalar>(
    channels: &[IonSpecies],
    fits: &[CalibrationFit<S>],
) -> Result<Vec<ElectrodeSpec<S>>> {
    channels
        .iter()
        .map(|ion| {
            let fit = fits
                .iter()
                .find(|f| f.ion.name() == ion.name())
                .ok_or_else(|| Error::State(format!("no calibration fit for {ion}")))?;
            let mut e = ElectrodeSpec::new(ion.clone(), S::zero());
            fit.apply_to(&mut e)?;
            Ok(e)
        })
        .collect()
}

/// Full degree-2 polynomial in the four voltages, one coefficient row per output.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel<S> {
    /// outputs x QUADRATIC_TERMS, in `monomials` order.
    pub coefficients: Vec<[S; QUADRATIC_TERMS]>,
}

/// 1, V0..V3, then Vj*Vk for j <= k.
pub fn monomials<S: Scalar>(v: &[S]) -> Result<[S; QUADRATIC_TERMS]> {
    if v.len() != 4 {
        return Err(Error::domain(format!("quadratic model needs 4 inputs, got {}", v.len())));
    }
    let mut out = [S::zero(); QUADRATIC_TERMS];
    out[0] = S::one();
    out[1..5].copy_from_slice(v);
    let mut idx = 5;
    for j in 0..4 {
        for k in j..4 {
            out[idx] = v[j] * v[k];
            idx += 1;
        }
    }
    Ok(out)
}

/// Ridge added to the normal equations.
pub const QUADRATIC_RIDGE: f64 = 1e-8;

pub fn fit_quadratic<S: Scalar>(train: &Dataset<S>) -> Result<QuadraticModel<S>> {
    fit_quadratic_with_ridge(train, S::lit(QUADRATIC_RIDGE))
}

pub fn fit_quadratic_with_ridge<S: Scalar>(train: &Dataset<S>, ridge: S) -> Result<QuadraticModel<S>> {
    const P: usize = QUADRATIC_TERMS;
    let n = train.len();
    if n < P {
        return Err(Error::domain(format!(
            "quadratic fit needs at least {P} rows, got {n}"
        )));
    }
    if train.input_dim() != 4 {
        return Err(Error::domain("quadratic fit needs 4 input voltages"));
    }
    let outputs = train.output_dim();
    let mut gram = vec![[S::zero(); P]; P];
    let mut rhs = vec![vec![S::zero(); outputs]; P];
    for (x, y) in train.inputs().rows().into_iter().zip(train.targets().rows()) {
        let x: Vec<S> = x.iter().copied().collect();
        let m = monomials(&x)?;
        for i in 0..P {
            for j in i..P {
                gram[i][j] += m[i] * m[j];
            }
            for (o, yo) in y.iter().enumerate() {
                rhs[i][o] += m[i] * *yo;
            }
        }
    }
    for i in 0..P {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
        gram[i][i] += ridge;
    }
    let solution = solve_spd(gram, rhs)?;
    let coefficients = (0..outputs)
        .map(|o| {
            let mut row = [S::zero(); P];
            for (i, r) in row.iter_mut().enumerate() {
                *r = solution[i][o];
            }
            row
        })
        .collect();
    Ok(QuadraticModel { coefficients })
}

/// Solves G X = B for symmetric positive definite G by Cholesky on the
/// diagonally equilibrated system.
fn solve_spd<S: Scalar, const P: usize>(mut g: Vec<[S; P]>, mut b: Vec<Vec<S>>) -> Result<Vec<Vec<S>>> {
    let scale: Vec<S> = (0..P)
        .map(|i| {
            let d = g[i][i];
            if d > S::zero() {
                S::one() / d.sqrt()
            } else {
                S::one()
            }
        })
        .collect();
    for i in 0..P {
        for j in 0..P {
            g[i][j] = g[i][j] * scale[i] * scale[j];
        }
        for v in b[i].iter_mut() {
            *v *= scale[i];
        }
    }
    let tol = S::lit(S::EPSILON_F64 * 64.0 * P as f64);
    let mut l = vec![[S::zero(); P]; P];
    for j in 0..P {
        let mut d = g[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > tol) {
            return Err(Error::Rank(format!(
                "quadratic design matrix is rank deficient (pivot {j})"
            )));
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in (j + 1)..P {
            let mut s = g[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / d;
        }
    }
    let cols = b.first().map_or(0, |r| r.len());
    let mut x = vec![vec![S::zero(); cols]; P];
    for c in 0..cols {
        let mut y = [S::zero(); P];
        for i in 0..P {
            let mut s = b[i][c];
            for k in 0..i {
                s -= l[i][k] * y[k];
            }
            y[i] = s / l[i][i];
        }
        for i in (0..P).rev() {
            let mut s = y[i];
            for k in (i + 1)..P {
                s -= l[k][i] * x[k][c];
            }
            x[i][c] = s / l[i][i];
        }
        for i in 0..P {
            x[i][c] *= scale[i];
        }
    }
    Ok(x)
}

pub fn predict_quadratic<S: Scalar>(model: &QuadraticModel<S>, voltages: &[S]) -> Result<Vec<S>> {
    let m = monomials(voltages)?;
    Ok(model
        .coefficients
        .iter()
        .map(|row| row.iter().zip(&m).map(|(c, x)| *c * *x).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn curve(a: f64, b: f64, vs: &[f64]) -> Vec<(f64, f64)> {
        vs.iter().map(|v| (*v, a * (b * v).exp())).collect()
    }

    #[test]
    fn exact_curve_is_recovered() {
        let fit = fit_exponential(IonSpecies::potassium(), &curve(2.0, 1.0, &[0.0, 0.5, 1.0])).unwrap();
        assert_relative_eq!(fit.a, 2.0, max_relative = 1e-12);
        assert_relative_eq!(fit.b, 1.0, max_relative = 1e-12);
        assert_eq!(fit.n_points, 3);
    }

    #[test]
    fn nitrate_coefficients_are_recovered() {
        let vs: Vec<f64> = (0..10).map(|i| 0.1 + 0.03 * i as f64).collect();
        let fit = fit_exponential(IonSpecies::nitrate(), &curve(73.727, -5.748, &vs)).unwrap();
        assert_relative_eq!(fit.a, 73.727, max_relative = 1e-6);
        assert!((fit.b + 5.748).abs() < 1e-9);
        assert!(fit.r_squared >= 0.999999);
    }

    #[test]
    fn flat_data() {
        let pts = [(0.1f64, 5.0f64), (0.2, 5.0), (0.3, 5.0)];
        let fit = fit_exponential(IonSpecies::calcium(), &pts).unwrap();
        assert_relative_eq!(fit.a, 5.0, max_relative = 1e-14);
        assert!(fit.b.abs() < 1e-12);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn fit_errors() {
        let k = IonSpecies::potassium();
        assert!(matches!(fit_exponential(k.clone(), &[(0.1, 1.0)]), Err(Error::Domain(_))));
        assert!(matches!(fit_exponential(k.clone(), &[(0.1, 1.0), (0.2, 0.0)]), Err(Error::Domain(_))));
        assert!(matches!(fit_exponential(k, &[(0.1, 1.0), (0.1, 2.0)]), Err(Error::Rank(_))));
    }

    #[test]
    fn ten_point_examples() {
        let vs = [0.1, 0.2, 0.3];
        let mut e = ElectrodeSpec::new(IonSpecies::nitrate(), 0.0);
        e.set_calibration(Calibration::new(73.727, -5.748).unwrap());
        assert_eq!(ten_point_calibration(&[e.clone()], &[0.0]).unwrap(), vec![73.727]);

        let pts = curve(0.3, 12.0, &vs);
        let fit = fit_exponential(IonSpecies::potassium(), &pts).unwrap();
        let electrodes = calibrated_electrodes(&[IonSpecies::potassium()], &[fit]).unwrap();
        for (v, c) in pts {
            assert_relative_eq!(ten_point_calibration(&electrodes, &[v]).unwrap()[0], c, max_relative = 1e-12);
        }
        let bare = ElectrodeSpec::new(IonSpecies::calcium(), 0.0);
        assert!(matches!(ten_point_calibration(&[bare], &[0.1]), Err(Error::State(_))));
        assert!(calibrated_electrodes::<f64>(&[IonSpecies::calcium()], &[]).is_err());
    }

    fn random_dataset(n: usize, seed: u64, target: impl Fn(&[f64]) -> [f64; 4]) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 4));
        let mut y = Array2::zeros((n, 4));
        for i in 0..n {
            let row: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = target(&row);
            for j in 0..4 {
                x[[i, j]] = row[j];
                y[[i, j]] = t[j];
            }
        }
        Dataset::new_unchecked(x, y)
    }

    #[test]
    fn quadratic_zero_targets() {
        let ds = random_dataset(40, 1, |_| [0.0; 4]);
        let m = fit_quadratic(&ds).unwrap();
        assert!(m.coefficients.iter().flatten().all(|c| *c == 0.0));
    }

    #[test]
    fn quadratic_linear_target() {
        let ds = random_dataset(60, 2, |v| [v[2], v[2], v[2], v[2]]);
        let m = fit_quadratic(&ds).unwrap();
        for row in &m.coefficients {
            for (i, c) in row.iter().enumerate() {
                let want = if i == 3 { 1.0 } else { 0.0 };
                assert!((c - want).abs() <= 1e-8, "term {i}: {c}");
            }
        }
    }

    #[test]
    fn quadratic_rank_deficiency() {
        let ds = random_dataset(10, 3, |_| [1.0; 4]);
        assert!(matches!(fit_quadratic(&ds), Err(Error::Domain(_))));
        // Two identical input channels make the design singular.
        let mut ds = random_dataset(50, 4, |v| [v[0]; 4]);
        let col = ds.inputs().column(0).to_owned();
        ds.inputs_mut().column_mut(1).assign(&col);
        assert!(matches!(fit_quadratic_with_ridge(&ds, 0.0), Err(Error::Rank(_))));
        assert!(fit_quadratic(&ds).is_ok());
    }

    #[test]
    fn predict_quadratic_examples() {
        let zero = QuadraticModel { coefficients: vec![[0.0; QUADRATIC_TERMS]; 4] };
        assert_eq!(predict_quadratic(&zero, &[0.1, 0.2, 0.3, 0.4]).unwrap(), vec![0.0; 4]);
        let mut c = [0.0; QUADRATIC_TERMS];
        c[0] = 7.5;
        let m = QuadraticModel { coefficients: vec![c] };
        assert_eq!(predict_quadratic(&m, &[0.1, 0.2, 0.3, 0.4]).unwrap(), vec![7.5]);
        let mut c = [0.0; QUADRATIC_TERMS];
        // V0*V1 is the second cross term: after 1, V0..V3 and V0*V0.
        c[6] = 2.0;
        let m = QuadraticModel { coefficients: vec![c] };
        assert_eq!(predict_quadratic(&m, &[3.0, 4.0, 0.0, 0.0]).unwrap(), vec![24.0]);
    }

    #[test]
    fn quadratic_beats_constant_predictor() {
        let ds = random_dataset(200, 5, |v| {
            let s = (v[0] * 3.0).exp() + v[1].sin();
            [s, s * 2.0, v[3].abs(), 1.0]
        });
        let m = fit_quadratic(&ds).unwrap();
        for o in 0..4 {
            let targets = ds.targets();
            let col = targets.column(o);
            let mean = col.mean().unwrap();
            let sse_const: f64 = col.iter().map(|y| (y - mean).powi(2)).sum();
            let sse_fit: f64 = ds
                .inputs()
                .rows()
                .into_iter()
                .zip(col.iter())
                .map(|(x, y)| {
                    let p = predict_quadratic(&m, x.as_slice().unwrap()).unwrap()[o];
                    (y - p).powi(2)
                })
                .sum();
            assert!(sse_fit <= sse_const + 1e-9, "output {o}: {sse_fit} > {sse_const}");
        }
    }

    proptest! {
        #[test]
        fn scale_equivariance(a in 0.01f64..100.0, b in -20.0f64..20.0, s in 0.01f64..100.0) {
            let vs = [0.05, 0.1, 0.17, 0.22, 0.31];
            let mut pts = curve(a, b, &vs);
            // Perturb so the fit is not exact.
            for (i, p) in pts.iter_mut().enumerate() { p.1 *= 1.0 + 0.01 * (i as f64 - 2.0); }
            let base = fit_exponential(IonSpecies::potassium(), &pts).unwrap();
            let scaled: Vec<_> = pts.iter().map(|(v, c)| (*v, c * s)).collect();
            let fit = fit_exponential(IonSpecies::potassium(), &scaled).unwrap();
            prop_assert!((fit.a / base.a / s - 1.0).abs() < 1e-9);
            prop_assert!((fit.b - base.b).abs() < 1e-8 * (1.0 + base.b.abs()));
        }

        #[test]
        fn shift_equivariance(a in 0.01f64..100.0, b in -20.0f64..20.0, delta in -0.5f64..0.5) {
            let vs = [0.05, 0.1, 0.17, 0.22, 0.31];
            let mut pts = curve(a, b, &vs);
            for (i, p) in pts.iter_mut().enumerate() { p.1 *= 1.0 + 0.02 * (i as f64 - 2.0).powi(2); }
            let base = fit_exponential(IonSpecies::potassium(), &pts).unwrap();
            let shifted: Vec<_> = pts.iter().map(|(v, c)| (*v + delta, *c)).collect();
            let fit = fit_exponential(IonSpecies::potassium(), &shifted).unwrap();
            prop_assert!((fit.b - base.b).abs() < 1e-8 * (1.0 + base.b.abs()));
            prop_assert!((fit.a / (base.a * (-base.b * delta).exp()) - 1.0).abs() < 1e-8);
        }

        #[test]
        fn noise_free_fit_r2(a in 0.01f64..100.0, b in -20.0f64..20.0) {
            let vs: Vec<f64> = (0..10).map(|i| 0.02 * i as f64).collect();
            let fit = fit_exponential(IonSpecies::potassium(), &curve(a, b, &vs)).unwrap();
            prop_assert!(fit.r_squared >= 0.999999);
        }
    }
}
