//! Central finite differences with one Richardson extrapolation step.
//!
//! Every stencil combines samples at spacing `h` and `h/2`, which cancels the
//! leading `O(h²)` truncation term and leaves `O(h⁴)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Result;

/// Step for first derivatives: cube root of machine epsilon, scaled by the coordinate.
pub fn first_step(x: f64) -> f64 {
    representable(x, f64::EPSILON.cbrt() * x.abs().max(1.0))
}

/// Step for second derivatives: fourth root of machine epsilon, scaled by the coordinate.
pub fn second_step(x: f64) -> f64 {
    representable(x, f64::EPSILON.powf(0.25) * x.abs().max(1.0))
}

// Make x + h exactly representable so the denominator matches the actual spacing.
fn representable(x: f64, h: f64) -> f64 {
    let shifted = x + h;
    shifted - x
}

/// Values that finite-difference stencils can combine linearly.
pub trait Combine: Sized {
    fn combine(terms: &[(f64, &Self)]) -> Self;
}

impl Combine for f64 {
    fn combine(terms: &[(f64, &Self)]) -> Self {
        terms.iter().map(|(c, v)| c * **v).sum()
    }
}

impl Combine for Complex64 {
    fn combine(terms: &[(f64, &Self)]) -> Self {
        terms.iter().map(|(c, v)| **v * *c).sum()
    }
}

impl Combine for DMatrix<f64> {
    fn combine(terms: &[(f64, &Self)]) -> Self {
        let (r, c) = terms[0].1.shape();
        let mut out = DMatrix::zeros(r, c);
        for (k, m) in terms {
            out += *k * *m;
        }
        out
    }
}

impl Combine for DVector<f64> {
    fn combine(terms: &[(f64, &Self)]) -> Self {
        let mut out = DVector::zeros(terms[0].1.len());
        for (k, v) in terms {
            out.axpy(*k, v, 1.0);
        }
        out
    }
}

fn shifted(q: &[f64], shifts: &[(usize, f64)]) -> Vec<f64> {
    let mut p = q.to_vec();
    for &(axis, d) in shifts {
        p[axis] += d;
    }
    p
}

/// `∂_a f` at `q` with base step `h`.
pub fn first_partial<T, F>(f: &F, q: &[f64], a: usize, h: f64) -> Result<T>
where
    T: Combine,
    F: Fn(&[f64]) -> Result<T>,
{
    let fp = f(&shifted(q, &[(a, h)]))?;
    let fm = f(&shifted(q, &[(a, -h)]))?;
    let fp2 = f(&shifted(q, &[(a, 0.5 * h)]))?;
    let fm2 = f(&shifted(q, &[(a, -0.5 * h)]))?;
    let c_half = 4.0 / (3.0 * h);
    let c_full = 1.0 / (6.0 * h);
    Ok(T::combine(&[
        (c_half, &fp2),
        (-c_half, &fm2),
        (-c_full, &fp),
        (c_full, &fm),
    ]))
}

/// `∂_a ∂_a f` at `q`; `f0` is the already-known value `f(q)`.
pub fn second_partial<T, F>(f: &F, q: &[f64], a: usize, h: f64, f0: &T) -> Result<T>
where
    T: Combine,
    F: Fn(&[f64]) -> Result<T>,
{
    let fp = f(&shifted(q, &[(a, h)]))?;
    let fm = f(&shifted(q, &[(a, -h)]))?;
    let fp2 = f(&shifted(q, &[(a, 0.5 * h)]))?;
    let fm2 = f(&shifted(q, &[(a, -0.5 * h)]))?;
    let h2 = h * h;
    Ok(T::combine(&[
        (16.0 / (3.0 * h2), &fp2),
        (16.0 / (3.0 * h2), &fm2),
        (-1.0 / (3.0 * h2), &fp),
        (-1.0 / (3.0 * h2), &fm),
        (-10.0 / h2, f0),
    ]))
}

/// `∂_a ∂_b f` for `a != b` at `q`.
pub fn mixed_partial<T, F>(f: &F, q: &[f64], a: usize, b: usize, ha: f64, hb: f64) -> Result<T>
where
    T: Combine,
    F: Fn(&[f64]) -> Result<T>,
{
    let corner = |sa: f64, sb: f64| f(&shifted(q, &[(a, sa), (b, sb)]));
    let pp = corner(ha, hb)?;
    let pm = corner(ha, -hb)?;
    let mp = corner(-ha, hb)?;
    let mm = corner(-ha, -hb)?;
    let pp2 = corner(0.5 * ha, 0.5 * hb)?;
    let pm2 = corner(0.5 * ha, -0.5 * hb)?;
    let mp2 = corner(-0.5 * ha, 0.5 * hb)?;
    let mm2 = corner(-0.5 * ha, -0.5 * hb)?;
    let c_full = 1.0 / (12.0 * ha * hb);
    let c_half = 4.0 / (3.0 * ha * hb);
    Ok(T::combine(&[
        (c_half, &pp2),
        (-c_half, &pm2),
        (-c_half, &mp2),
        (c_half, &mm2),
        (-c_full, &pp),
        (c_full, &pm),
        (c_full, &mp),
        (-c_full, &mm),
    ]))
}

/// Gradient and (symmetric) Hessian of `f` at `q` using steps from `step`.
pub fn gradient_and_hessian<T, F>(
    f: &F,
    q: &[f64],
    f0: &T,
    step: impl Fn(usize) -> (f64, f64),
) -> Result<(Vec<T>, Vec<Vec<T>>)>
where
    T: Combine + Clone,
    F: Fn(&[f64]) -> Result<T>,
{
    let n = q.len();
    let mut grad = Vec::with_capacity(n);
    for a in 0..n {
        grad.push(first_partial(f, q, a, step(a).0)?);
    }
    let mut hess: Vec<Vec<Option<T>>> = vec![vec![None; n]; n];
    for a in 0..n {
        hess[a][a] = Some(second_partial(f, q, a, step(a).1, f0)?);
        for b in (a + 1)..n {
            let m = mixed_partial(f, q, a, b, step(a).1, step(b).1)?;
            hess[b][a] = Some(m.clone());
            hess[a][b] = Some(m);
        }
    }
    let hess = hess
        .into_iter()
        .map(|row| row.into_iter().map(|v| v.expect("filled")).collect())
        .collect();
    Ok((grad, hess))
}

/// Least-squares fit of `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(x: &[f64]) -> Result<f64> {
        Ok((x[0] * 1.3).sin() * (x[1] * 0.7).exp())
    }

    #[test]
    fn stencils_reach_expected_accuracy() {
        let q = [0.4, -0.2];
        let f0 = f(&q).unwrap();
        let (g, h) = gradient_and_hessian(&f, &q, &f0, |a| (first_step(q[a]), second_step(q[a])))
            .unwrap();
        let s = (1.3 * q[0]).sin();
        let c = (1.3 * q[0]).cos();
        let e = (0.7 * q[1]).exp();
        assert!((g[0] - 1.3 * c * e).abs() < 1e-10);
        assert!((g[1] - 0.7 * s * e).abs() < 1e-10);
        assert!((h[0][0] + 1.69 * s * e).abs() < 1e-7);
        assert!((h[1][1] - 0.49 * s * e).abs() < 1e-7);
        assert!((h[0][1] - 0.91 * c * e).abs() < 1e-7);
        assert_eq!(h[0][1], h[1][0]);
    }

    #[test]
    fn richardson_is_exact_on_quartics() {
        let p = |x: &[f64]| -> Result<f64> { Ok(x[0].powi(4)) };
        let x = [1.5];
        let d1 = first_partial(&p, &x, 0, 0.1).unwrap();
        let d2 = second_partial(&p, &x, 0, 0.1, &p(&x).unwrap()).unwrap();
        assert!((d1 - 4.0 * 1.5f64.powi(3)).abs() < 1e-11);
        assert!((d2 - 12.0 * 1.5f64.powi(2)).abs() < 1e-9);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs = [0.1, 0.2, 0.4, 0.8];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x).collect();
        let (a, b) = linear_fit(&xs, &ys);
        assert!((a - 2.0).abs() < 1e-14 && (b + 3.0).abs() < 1e-14);
    }
}
