//! Quasi-classical propagator data for the free natural system.
//!
//! The classical action between `(q′, t′)` and `(q, t)` is
//! `S = m s(q, q′)² / (2 Δt)` with `s` the geodesic distance. The Van Vleck
//! determinant `D = det(−∂²S/∂q^i ∂q′^j)` weights the propagator, and the
//! leftover term of the Schrödinger equation is the two-point potential
//!
//! ```text
//! Ṽ = (ħ²/2m) ∂_i( ω^{1/2} ∂^i F ) / (ω^{1/2} F),   F = ω^{-1/4} D^{1/2},
//! ```
//!
//! i.e. `(ħ²/2m) ΔF / F` with the Laplace–Beltrami operator in `q`. As
//! `q′ → q` it tends to `(ħ²/2m) R/6`.

use nalgebra::DMatrix;

use crate::chart::{MetricChart, Order};
use crate::error::{Error, Result};
use crate::fd;
use crate::geometry::geometry_jet;
use crate::normal::{exp_map, shoot};
use crate::quantization::{laplacian, ScalarJet};
use crate::Constants;
use num_complex::Complex64;

/// RK4 steps per shooting trajectory.
pub const SHOOTING_STEPS: usize = 200;
/// Step of the mixed `q`/`q′` differences of the action.
pub const ACTION_STEP: f64 = 1e-2;
/// Step of the `q` differences of the density `F`.
pub const DENSITY_STEP: f64 = 5e-2;

/// Geodesic distance from `from` to `to` by shooting; also returns the
/// initial velocity at `from`.
pub fn geodesic_distance(
    chart: &MetricChart,
    from: &[f64],
    to: &[f64],
    guess: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let shot = shoot(chart, from, to, SHOOTING_STEPS, guess)?;
    Ok((shot.distance, shot.velocity))
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time interval must be positive, got {dt}")));
    }
    Ok(())
}

/// `S(q, t | q′, t′) = m s² / (2 dt)`, `dt = t − t′ > 0`.
pub fn classical_action(
    chart: &MetricChart,
    consts: &Constants,
    q: &[f64],
    q_prime: &[f64],
    dt: f64,
) -> Result<f64> {
    check_dt(dt)?;
    let (s, _) = geodesic_distance(chart, q_prime, q, None)?;
    Ok(consts.mass * s * s / (2.0 * dt))
}

/// `D = det(−∂²S/∂q^i ∂q′^j)` by Richardson-extrapolated central differences.
pub fn van_vleck(
    chart: &MetricChart,
    consts: &Constants,
    q: &[f64],
    q_prime: &[f64],
    dt: f64,
) -> Result<f64> {
    check_dt(dt)?;
    let n = chart.dim();
    if q.len() != n || q_prime.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.len().min(q_prime.len()),
        });
    }
    let (_, v0) = geodesic_distance(chart, q_prime, q, None)?;
    // Action as a function of the concatenated point (q, q′).
    let action = |x: &[f64]| -> Result<f64> {
        let (s, _) = geodesic_distance(chart, &x[n..], &x[..n], Some(&v0))?;
        Ok(consts.mass * s * s / (2.0 * dt))
    };
    let x: Vec<f64> = q.iter().chain(q_prime).copied().collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let h = ACTION_STEP;
            m[(i, j)] = -fd::mixed_partial(&action, &x, i, n + j, h, h)?;
        }
    }
    let d = m.determinant();
    if d < 0.0 {
        return Err(Error::NegativeDeterminant(d));
    }
    Ok(d)
}

/// Two-point potential `Ṽ(q, q′)`; independent of `dt` for the free system.
pub fn v_tilde(
    chart: &MetricChart,
    consts: &Constants,
    q: &[f64],
    q_prime: &[f64],
    dt: f64,
) -> Result<f64> {
    let density = |p: &[f64]| -> Result<f64> {
        let det = chart.metric(p)?.determinant();
        Ok((van_vleck(chart, consts, p, q_prime, dt)? / det.sqrt()).sqrt())
    };
    let f0 = density(q)?;
    let (grad, hess) = fd::gradient_and_hessian(&density, q, &f0, |_| (DENSITY_STEP, DENSITY_STEP))?;
    let c = |x: f64| Complex64::new(x, 0.0);
    let jet = ScalarJet {
        value: c(f0),
        grad: grad.into_iter().map(c).collect(),
        hess: hess.into_iter().map(|r| r.into_iter().map(c).collect()).collect(),
    };
    let mj = chart.metric_jet(q, Order::First)?;
    Ok(consts.kinetic() * laplacian(&mj, &jet).re / f0)
}

/// One point of a propagator series.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorSample {
    pub q: Vec<f64>,
    pub q_prime: Vec<f64>,
    pub t: f64,
    pub t_prime: f64,
    pub distance: f64,
    pub action: f64,
    pub van_vleck: f64,
    pub v_tilde: f64,
}

/// Points `exp_{q0}(s u)` along the ray with unit direction `u = E(1, …, 1)/√n`,
/// `E` the lower-triangular orthonormal frame at `q0`.
pub fn ray_points(chart: &MetricChart, q0: &[f64], separations: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = chart.dim();
    let m = chart.metric(q0)?;
    let l = m
        .cholesky()
        .ok_or_else(|| Error::NonPositiveDefinite { point: q0.to_vec() })?
        .l();
    let frame = l
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::NonPositiveDefinite { point: q0.to_vec() })?;
    let u = frame * nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    separations
        .iter()
        .map(|s| exp_map(chart, q0, (&u * *s).as_slice(), SHOOTING_STEPS))
        .collect()
}

/// Samples with `q = q0` fixed and `q′` moving out along a geodesic ray.
pub fn propagator_series(
    chart: &MetricChart,
    consts: &Constants,
    q0: &[f64],
    separations: &[f64],
    dt: f64,
) -> Result<Vec<PropagatorSample>> {
    check_dt(dt)?;
    ray_points(chart, q0, separations)?
        .into_iter()
        .map(|qp| {
            let (s, _) = geodesic_distance(chart, &qp, q0, None)?;
            Ok(PropagatorSample {
                q: q0.to_vec(),
                q_prime: qp.clone(),
                t: dt,
                t_prime: 0.0,
                distance: s,
                action: consts.mass * s * s / (2.0 * dt),
                van_vleck: van_vleck(chart, consts, q0, &qp, dt)?,
                v_tilde: v_tilde(chart, consts, q0, &qp, dt)?,
            })
        })
        .collect()
}

/// `Ṽ` extrapolated to coincident points.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceLimit {
    pub separations: Vec<f64>,
    pub values: Vec<f64>,
    /// Intercept `a` of the fit `value = a + b s`.
    pub extrapolated: f64,
    pub slope: f64,
    pub scalar_curvature: f64,
    /// `(ħ²/2m) R/6`.
    pub predicted: f64,
}

impl CoincidenceLimit {
    pub fn relative_error(&self) -> f64 {
        let d = (self.extrapolated - self.predicted).abs();
        if self.predicted != 0.0 {
            d / self.predicted.abs()
        } else {
            d
        }
    }
}

/// Evaluates `Ṽ(q0, q′)` with `q′` at each separation along a geodesic ray and
/// fits `a + b s`.
pub fn coincidence_limit(
    chart: &MetricChart,
    consts: &Constants,
    q0: &[f64],
    separations: &[f64],
) -> Result<CoincidenceLimit> {
    if separations.len() < 2 || separations.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("need at least two positive separations".into()));
    }
    let values = ray_points(chart, q0, separations)?
        .iter()
        .map(|qp| v_tilde(chart, consts, q0, qp, 1.0))
        .collect::<Result<Vec<f64>>>()?;
    let (a, b) = fd::linear_fit(separations, &values);
    let scalar_curvature = geometry_jet(chart, q0)?.scalar_curvature;
    Ok(CoincidenceLimit {
        separations: separations.to_vec(),
        values,
        extrapolated: a,
        slope: b,
        scalar_curvature,
        predicted: consts.kinetic() * scalar_curvature / 6.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::chart_from_id;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn flat_action_and_determinant() {
        let c = chart_from_id("cartesian:2").unwrap();
        let k = Constants::new(1.0, 2.0).unwrap();
        let s = classical_action(&c, &k, &[1.0, 2.0], &[0.0, 0.5], 0.5).unwrap();
        assert!((s - 2.0 * (1.0 + 2.25) / 1.0).abs() < 1e-12);
        let d = van_vleck(&c, &k, &[1.0, 2.0], &[0.0, 0.5], 0.5).unwrap();
        assert!((d - 16.0).abs() < 1e-6 * 16.0, "{d}");
        let v = v_tilde(&c, &k, &[1.0, 2.0], &[0.0, 0.5], 0.5).unwrap();
        assert!(v.abs() < 1e-6, "{v}");
        assert!(classical_action(&c, &k, &[1.0, 2.0], &[0.0, 0.5], 0.0).is_err());
    }

    #[test]
    fn sphere_equator_action() {
        let c = chart_from_id("sphere2:1").unwrap();
        let k = Constants::default();
        let s = classical_action(&c, &k, &[FRAC_PI_2, 1.1], &[FRAC_PI_2, 0.2], 2.0).unwrap();
        assert!((s - 0.81 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_van_vleck() {
        let c = chart_from_id("sphere2:1").unwrap();
        let k = Constants::default();
        let s: f64 = 0.5;
        let d = van_vleck(&c, &k, &[FRAC_PI_2, s], &[FRAC_PI_2, 0.0], 1.0).unwrap();
        assert!((d / (s / s.sin()) - 1.0).abs() < 1e-6, "{d}");
    }
}
