//! Geodesics, the exponential map, and normal Riemannian coordinates.
//!
//! Normal coordinates `y` about `q0` are defined by `q(y) = exp_{q0}(E y)`,
//! where the frame `E` satisfies `Eᵀ ω(q0) E = I`. In them the metric reads
//! `g_ij(y) = δ_ij − (1/3) R_ikjl y^k y^l + O(|y|³)` and the DeWitt QMP tends to
//! `(ħ²/2m) R/6` at the origin.

use nalgebra::{DMatrix, DVector};

use crate::chart::{Axis, JetSource, MetricChart, MetricField, Order};
use crate::error::{Error, Result};
use crate::fd;
use crate::geometry::{christoffel, christoffel_derivatives, geometry_jet, inverse};
use crate::quantization::qmp_dewitt;
use crate::tensor::{Tensor3, Tensor4};
use crate::Constants;

/// Maximum Newton iterations of the shooting solver.
pub const SHOOTING_MAX_ITERATIONS: usize = 50;
/// Shooting converges once the endpoint miss is below this ω-distance.
pub const SHOOTING_TOL: f64 = 1e-10;
/// `|det ∂q/∂v|` below this flags a conjugate point.
pub const CONJUGATE_DET_TOL: f64 = 1e-6;
/// Allowed drift of `ω(q̇, q̇)` per unit arc length.
pub const SPEED_DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSample {
    pub s: f64,
    pub q: Vec<f64>,
    pub velocity: Vec<f64>,
}

/// An arc-length parametrized geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct Geodesic {
    pub start: Vec<f64>,
    /// Initial velocity, unit in the ω-norm.
    pub velocity: Vec<f64>,
    pub samples: Vec<GeodesicSample>,
    /// Largest `|ω(q̇, q̇) − 1|` seen along the samples.
    pub max_drift: f64,
}

impl Geodesic {
    pub fn end(&self) -> &GeodesicSample {
        self.samples.last().expect("geodesic has samples")
    }
}

fn left_domain(err: Error, at: f64) -> Error {
    match err {
        Error::PointOutsideDomain { .. }
        | Error::NonPositiveDefinite { .. }
        | Error::StencilClipsBoundary { .. } => Error::LeftDomain { at },
        other => other,
    }
}

fn gamma_contract(gamma: &Tensor3, u: &[f64], w: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|a| {
            let mut s = 0.0;
            for b in 0..n {
                for c in 0..n {
                    s += gamma[(a, b, c)] * u[b] * w[c];
                }
            }
            s
        })
        .collect()
}

fn rk4_step<F>(f: &F, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(y)?;
    let k2 = f(&(y + 0.5 * h * &k1))?;
    let k3 = f(&(y + 0.5 * h * &k2))?;
    let k4 = f(&(y + h * &k3))?;
    Ok(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

fn geodesic_rhs(chart: &MetricChart, y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = chart.dim();
    let q = &y.as_slice()[..n];
    let v = &y.as_slice()[n..];
    let jet = chart.metric_jet(q, Order::First)?;
    let gamma = christoffel(&jet, &inverse(&jet.value));
    let acc = gamma_contract(&gamma, v, v);
    let mut out = DVector::zeros(2 * n);
    for a in 0..n {
        out[a] = v[a];
        out[n + a] = -acc[a];
    }
    Ok(out)
}

fn speed_sqr(chart: &MetricChart, q: &[f64], v: &[f64]) -> Result<f64> {
    let m = chart.metric(q)?;
    let v = DVector::from_column_slice(v);
    Ok(v.dot(&(&m * &v)))
}

/// Solves `q̈^a + Γ^a_bc q̇^b q̇^c = 0` by fixed-step RK4 in arc length.
///
/// The initial velocity is rescaled to unit ω-norm; `step` is an upper bound
/// on the arc-length step.
pub fn integrate_geodesic(
    chart: &MetricChart,
    start: &[f64],
    velocity: &[f64],
    s_max: f64,
    step: f64,
) -> Result<Geodesic> {
    let n = chart.dim();
    if velocity.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: velocity.len(),
        });
    }
    if !(s_max >= 0.0 && s_max.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need s_max >= 0 and step > 0, got {s_max}, {step}"
        )));
    }
    let norm = speed_sqr(chart, start, velocity)?.sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidArgument("velocity must be nonzero".into()));
    }
    let v0: Vec<f64> = velocity.iter().map(|v| v / norm).collect();
    let steps = ((s_max / step).ceil() as usize).max(1);
    let h = s_max / steps as f64;

    let mut y = DVector::from_iterator(2 * n, start.iter().chain(&v0).copied());
    let mut samples = vec![GeodesicSample {
        s: 0.0,
        q: start.to_vec(),
        velocity: v0.clone(),
    }];
    let mut max_drift: f64 = 0.0;
    for k in 1..=steps {
        let s = k as f64 * h;
        y = rk4_step(&|y| geodesic_rhs(chart, y), &y, h).map_err(|e| left_domain(e, s))?;
        let q = y.as_slice()[..n].to_vec();
        let v = y.as_slice()[n..].to_vec();
        let drift = (speed_sqr(chart, &q, &v).map_err(|e| left_domain(e, s))? - 1.0).abs();
        max_drift = max_drift.max(drift);
        samples.push(GeodesicSample { s, q, velocity: v });
    }
    if max_drift > SPEED_DRIFT_TOL * s_max.max(1.0) {
        return Err(Error::StepTooLarge { drift: max_drift });
    }
    Ok(Geodesic {
        start: start.to_vec(),
        velocity: v0,
        samples,
        max_drift,
    })
}

/// Endpoint `exp_base(v)` after unit parameter time, with `∂q/∂v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpPoint {
    pub point: Vec<f64>,
    pub jacobian: DMatrix<f64>,
}

/// `exp_base(v)` by `steps` RK4 steps over unit parameter time.
pub fn exp_map(chart: &MetricChart, base: &[f64], v: &[f64], steps: usize) -> Result<Vec<f64>> {
    let n = chart.dim();
    let speed = speed_sqr(chart, base, v)?.sqrt();
    let h = 1.0 / steps as f64;
    let mut y = DVector::from_iterator(2 * n, base.iter().chain(v).copied());
    for k in 0..steps {
        y = rk4_step(&|y| geodesic_rhs(chart, y), &y, h)
            .map_err(|e| left_domain(e, k as f64 * h * speed))?;
    }
    Ok(y.as_slice()[..n].to_vec())
}

/// `exp_base(v)` together with its Jacobian from the variational equations.
pub fn exp_map_with_jacobian(
    chart: &MetricChart,
    base: &[f64],
    v: &[f64],
    steps: usize,
) -> Result<ExpPoint> {
    let n = chart.dim();
    if v.len() != n || base.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let speed = speed_sqr(chart, base, v)?.sqrt();
    // Layout: q, v, Q = ∂q/∂v0 (column-major), V = ∂v/∂v0.
    let len = 2 * n + 2 * n * n;
    let mut y = DVector::zeros(len);
    for a in 0..n {
        y[a] = base[a];
        y[n + a] = v[a];
        y[2 * n + n * n + a * n + a] = 1.0;
    }
    let rhs = |y: &DVector<f64>| -> Result<DVector<f64>> {
        let s = y.as_slice();
        let q = &s[..n];
        let vel = &s[n..2 * n];
        let qm = &s[2 * n..2 * n + n * n];
        let vm = &s[2 * n + n * n..];
        let jet = chart.metric_jet(q, Order::Second)?;
        let inv = inverse(&jet.value);
        let gamma = christoffel(&jet, &inv);
        let dgamma = christoffel_derivatives(&jet, &inv);
        let mut out = DVector::zeros(len);
        let acc = gamma_contract(&gamma, vel, vel);
        // ∂_d Γ^a_bc v^b v^c
        let mut dacc = DMatrix::zeros(n, n);
        for a in 0..n {
            out[a] = vel[a];
            out[n + a] = -acc[a];
            for d in 0..n {
                let mut t = 0.0;
                for b in 0..n {
                    for c in 0..n {
                        t += dgamma[(d, a, b, c)] * vel[b] * vel[c];
                    }
                }
                dacc[(a, d)] = t;
            }
        }
        for k in 0..n {
            let qk = &qm[k * n..(k + 1) * n];
            let vk = &vm[k * n..(k + 1) * n];
            let mixed = gamma_contract(&gamma, vel, vk);
            for a in 0..n {
                out[2 * n + k * n + a] = vk[a];
                let dq: f64 = (0..n).map(|d| dacc[(a, d)] * qk[d]).sum();
                out[2 * n + n * n + k * n + a] = -dq - 2.0 * mixed[a];
            }
        }
        Ok(out)
    };
    let h = 1.0 / steps as f64;
    for k in 0..steps {
        y = rk4_step(&rhs, &y, h).map_err(|e| left_domain(e, k as f64 * h * speed))?;
    }
    let s = y.as_slice();
    Ok(ExpPoint {
        point: s[..n].to_vec(),
        jacobian: DMatrix::from_column_slice(n, n, &s[2 * n..2 * n + n * n]),
    })
}

/// Result of solving `exp_base(v) = target` for `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub velocity: Vec<f64>,
    /// `∂q/∂v` at the solution.
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    /// Endpoint miss in the ω-norm at `target`.
    pub residual: f64,
    /// Geodesic distance `|v|_ω(base)`.
    pub distance: f64,
}

fn miss(chart: &MetricChart, target: &[f64], m: &DMatrix<f64>, q: &[f64]) -> (DVector<f64>, f64) {
    let r = DVector::from_vec(chart.displacement(q, target));
    let norm = r.dot(&(m * &r)).max(0.0).sqrt();
    (r, norm)
}

/// Damped Newton shooting for the geodesic from `base` to `target`.
///
/// `guess` defaults to the coordinate displacement. After reaching
/// [`SHOOTING_TOL`] the iteration continues while the miss still shrinks, so the
/// returned velocity is accurate to rounding.
pub fn shoot(
    chart: &MetricChart,
    base: &[f64],
    target: &[f64],
    steps: usize,
    guess: Option<&[f64]>,
) -> Result<Shot> {
    let m_target = chart.metric(target)?;
    let m_base = chart.metric(base)?;
    let mut v = DVector::from_vec(
        guess
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| chart.displacement(base, target)),
    );
    let mut e = exp_map_with_jacobian(chart, base, v.as_slice(), steps)?;
    let (mut r, mut res) = miss(chart, target, &m_target, &e.point);
    let mut iterations = 0;
    let mut polish = 0;
    while res > 0.0 && iterations < SHOOTING_MAX_ITERATIONS {
        iterations += 1;
        let det = e.jacobian.determinant();
        if det.abs() < CONJUGATE_DET_TOL {
            return Err(Error::ConjugatePointSuspected { det });
        }
        let dv = e
            .jacobian
            .clone()
            .lu()
            .solve(&r)
            .ok_or(Error::ConjugatePointSuspected { det })?;
        // Past the tolerance only full Newton steps are tried, to polish to rounding.
        let converged = res <= SHOOTING_TOL;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..if converged { 1 } else { 30 } {
            let trial = &v + lambda * &dv;
            match exp_map_with_jacobian(chart, base, trial.as_slice(), steps) {
                Ok(te) => {
                    let (tr, tres) = miss(chart, target, &m_target, &te.point);
                    if tres < res {
                        accepted = Some((trial, te, tr, tres));
                        break;
                    }
                }
                Err(Error::LeftDomain { .. }) => {}
                Err(other) => return Err(other),
            }
            lambda *= 0.5;
        }
        let Some((tv, te, tr, tres)) = accepted else {
            break;
        };
        v = tv;
        e = te;
        r = tr;
        res = tres;
        if converged {
            polish += 1;
            if polish == 2 {
                break;
            }
        }
    }
    if !(res <= SHOOTING_TOL) {
        return Err(Error::ShootingDiverged { iterations, residual: res });
    }
    let distance = v.dot(&(&m_base * &v)).sqrt();
    Ok(Shot {
        velocity: v.as_slice().to_vec(),
        jacobian: e.jacobian,
        iterations,
        residual: res,
        distance,
    })
}

/// Normal Riemannian coordinates about `origin`.
#[derive(Debug, Clone)]
pub struct NormalChart {
    base: MetricChart,
    origin: Vec<f64>,
    frame: DMatrix<f64>,
    frame_inverse: DMatrix<f64>,
    radius: f64,
    steps: usize,
}

/// Minimum RK4 steps for the exponential map: the arc step stays below radius/1000.
pub const MIN_RESOLUTION: usize = 1000;

/// Builds normal coordinates of radius `radius` about `q0` using `resolution`
/// RK4 steps per exponential map (at least [`MIN_RESOLUTION`]).
pub fn build_normal_chart(
    chart: &MetricChart,
    q0: &[f64],
    radius: f64,
    resolution: usize,
) -> Result<NormalChart> {
    let n = chart.dim();
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad radius {radius}")));
    }
    let m = chart.metric(q0)?;
    // ω = L Lᵀ, frame E = L^{-T}.
    let l = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonPositiveDefinite { point: q0.to_vec() })?
        .l();
    let frame_inverse = l.transpose();
    let frame = frame_inverse
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NonPositiveDefinite { point: q0.to_vec() })?;
    let nc = NormalChart {
        base: chart.clone(),
        origin: q0.to_vec(),
        frame,
        frame_inverse,
        radius,
        steps: resolution.max(MIN_RESOLUTION),
    };
    // Geodesics along every frame direction must stay in the chart.
    for k in 0..n {
        for sign in [-1.0, 1.0] {
            let mut y = vec![0.0; n];
            y[k] = sign * radius;
            nc.forward(&y)?;
        }
    }
    Ok(nc)
}

impl NormalChart {
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// Columns are the orthonormal frame vectors at the origin.
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn base(&self) -> &MetricChart {
        &self.base
    }

    fn velocity(&self, y: &[f64]) -> Vec<f64> {
        (&self.frame * DVector::from_column_slice(y)).as_slice().to_vec()
    }

    /// `q(y)`.
    pub fn forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        exp_map(&self.base, &self.origin, &self.velocity(y), self.steps)
    }

    /// `y(q)` by shooting.
    pub fn inverse(&self, q: &[f64]) -> Result<Vec<f64>> {
        let shot = shoot(&self.base, &self.origin, q, self.steps, None)?;
        Ok((&self.frame_inverse * DVector::from_vec(shot.velocity)).as_slice().to_vec())
    }

    /// Pulled-back metric `g_ij(y) = (∂q/∂y)ᵀ ω(q(y)) (∂q/∂y)`.
    pub fn pullback_metric(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let e = exp_map_with_jacobian(&self.base, &self.origin, &self.velocity(y), self.steps)?;
        let j = &e.jacobian * &self.frame;
        let m = self.base.metric(&e.point)?;
        let g = j.transpose() * m * &j;
        Ok(0.5 * (&g + g.transpose()))
    }

    /// The normal coordinates as a chart on the box `(−radius, radius)ⁿ`, with
    /// finite-difference jets.
    pub fn chart(&self) -> MetricChart {
        let n = self.base.dim();
        MetricChart::new(
            format!("normal[{}]", self.base.id()),
            vec![Axis::open(-self.radius, self.radius); n],
            JetSource::Numeric,
            std::sync::Arc::new(self.clone()),
        )
        .expect("normal chart domain is valid")
    }

    /// `R_(ikjl)` of the base metric at the origin, in the frame.
    pub fn frame_riemann(&self) -> Result<Tensor4> {
        let g = geometry_jet(&self.base, &self.origin)?;
        let low = g.riemann_lowered();
        let n = self.base.dim();
        let e = &self.frame;
        let mut out = Tensor4::zeros(n);
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let mut s = 0.0;
                        for a in 0..n {
                            for b in 0..n {
                                for c in 0..n {
                                    for d in 0..n {
                                        s += e[(a, i)] * e[(b, k)] * e[(c, j)] * e[(d, l)]
                                            * low[(a, b, c, d)];
                                    }
                                }
                            }
                        }
                        out[(i, k, j, l)] = s;
                    }
                }
            }
        }
        Ok(out)
    }
}

impl MetricField for NormalChart {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn metric(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.pullback_metric(y)
    }
}

/// Quadratic coefficients of the pulled-back metric, `g_ij − δ_ij ≈ C_ikjl y^k y^l`,
/// symmetrized in `(k, l)`, against the prediction `−(1/3) R_ikjl`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionFit {
    pub fit_radius: f64,
    pub fitted: Tensor4,
    pub predicted: Tensor4,
    pub condition: f64,
}

impl ExpansionFit {
    pub fn max_abs_error(&self) -> f64 {
        let n = self.fitted.dim();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        m = m.max((self.fitted[(i, k, j, l)] - self.predicted[(i, k, j, l)]).abs());
                    }
                }
            }
        }
        m
    }
}

/// Condition number above which the fit is rejected.
pub const FIT_CONDITION_LIMIT: f64 = 1e8;

/// Least-squares fit of the quadratic term of the normal-chart metric on
/// sample points at radii `fit_radius/2` and `fit_radius`.
pub fn metric_expansion_fit(nc: &NormalChart, fit_radius: f64) -> Result<ExpansionFit> {
    let n = nc.base.dim();
    if !(fit_radius > 0.0 && fit_radius < nc.radius) {
        return Err(Error::InvalidArgument(format!(
            "fit radius {fit_radius} must lie in (0, {})",
            nc.radius
        )));
    }
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for k in 0..n {
        for s in [-1.0, 1.0] {
            let mut d = vec![0.0; n];
            d[k] = s;
            dirs.push(d);
        }
        for l in (k + 1)..n {
            for (sk, sl) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut d = vec![0.0; n];
                d[k] = sk * h;
                d[l] = sl * h;
                dirs.push(d);
            }
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|k| (k..n).map(move |l| (k, l))).collect();
    let mut points = Vec::new();
    for scale in [0.5 * fit_radius, fit_radius] {
        for d in &dirs {
            points.push(d.iter().map(|x| x * scale).collect::<Vec<f64>>());
        }
    }
    let a = DMatrix::from_fn(points.len(), pairs.len(), |p, c| {
        let (k, l) = pairs[c];
        points[p][k] * points[p][l]
    });
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < FIT_CONDITION_LIMIT) {
        return Err(Error::FitIllConditioned(condition));
    }
    let metrics = points
        .iter()
        .map(|y| nc.pullback_metric(y))
        .collect::<Result<Vec<_>>>()?;
    let mut fitted = Tensor4::zeros(n);
    for i in 0..n {
        for j in i..n {
            let b = DVector::from_fn(points.len(), |p, _| {
                metrics[p][(i, j)] - if i == j { 1.0 } else { 0.0 }
            });
            let c = svd
                .solve(&b, 0.0)
                .map_err(|e| Error::SolverFailure(e.to_string()))?;
            for (idx, &(k, l)) in pairs.iter().enumerate() {
                let v = if k == l { c[idx] } else { 0.5 * c[idx] };
                for (ii, jj) in [(i, j), (j, i)] {
                    fitted[(ii, k, jj, l)] = v;
                    fitted[(ii, l, jj, k)] = v;
                }
            }
        }
    }
    let r = nc.frame_riemann()?;
    let mut predicted = Tensor4::zeros(n);
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                for l in 0..n {
                    predicted[(i, k, j, l)] = -(r[(i, k, j, l)] + r[(i, l, j, k)]) / 6.0;
                }
            }
        }
    }
    Ok(ExpansionFit {
        fit_radius,
        fitted,
        predicted,
        condition,
    })
}

/// QMP in normal coordinates extrapolated to the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalAsymptote {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Intercept `a` of the fit `value = a + b r`.
    pub extrapolated: f64,
    pub slope: f64,
    pub scalar_curvature: f64,
    /// `(ħ²/2m) R/6`.
    pub predicted: f64,
    /// Sign of the extrapolated value: `1`, `-1`, or `0` when it vanishes.
    pub sign: i8,
}

impl NormalAsymptote {
    /// `| |a| − |predicted| | / |predicted|`; absolute when the prediction is zero.
    pub fn magnitude_error(&self) -> f64 {
        let d = (self.extrapolated.abs() - self.predicted.abs()).abs();
        if self.predicted != 0.0 {
            d / self.predicted.abs()
        } else {
            d
        }
    }
}

/// Halving sequence `r0 / 2^k`, `k = 0..count`.
pub fn halving_radii(r0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| r0 / f64::powi(2.0, k as i32)).collect()
}

/// Values below this are reported with sign 0.
pub const ZERO_TOL: f64 = 1e-9;

/// Evaluates the DeWitt QMP of the normal chart about `q0` at `y = r u`,
/// `u = (1, …, 1)/√n`, for each radius, and extrapolates linearly to `r = 0`.
pub fn qmp_normal_asymptote(
    chart: &MetricChart,
    consts: &Constants,
    q0: &[f64],
    radii: &[f64],
) -> Result<NormalAsymptote> {
    if radii.len() < 2 || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("need at least two positive radii".into()));
    }
    let n = chart.dim();
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let nc = build_normal_chart(chart, q0, 2.0 * rmax, MIN_RESOLUTION)?;
    let normal = nc.chart();
    let u = 1.0 / (n as f64).sqrt();
    let values = radii
        .iter()
        .map(|r| Ok(qmp_dewitt(&normal, consts, &vec![r * u; n])?.v_dw))
        .collect::<Result<Vec<f64>>>()?;
    let (a, b) = fd::linear_fit(radii, &values);
    let scalar_curvature = geometry_jet(chart, q0)?.scalar_curvature;
    let sign = if a.abs() < ZERO_TOL {
        0
    } else if a > 0.0 {
        1
    } else {
        -1
    };
    Ok(NormalAsymptote {
        radii: radii.to_vec(),
        values,
        extrapolated: a,
        slope: b,
        scalar_curvature,
        predicted: consts.kinetic() * scalar_curvature / 6.0,
        sign,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::chart_from_id;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_lines_in_the_plane() {
        let c = chart_from_id("cartesian:2").unwrap();
        let g = integrate_geodesic(&c, &[1.0, -1.0], &[3.0, 4.0], 2.0, 0.01).unwrap();
        let end = g.end();
        assert!((end.q[0] - (1.0 + 2.0 * 0.6)).abs() < 1e-14);
        assert!((end.q[1] - (-1.0 + 2.0 * 0.8)).abs() < 1e-14);
    }

    #[test]
    fn equator_is_a_geodesic() {
        let c = chart_from_id("sphere2:1").unwrap();
        let g = integrate_geodesic(&c, &[FRAC_PI_2, 0.0], &[0.0, 1.0], 3.0, 1e-3).unwrap();
        for s in g.samples.iter().step_by(500) {
            assert!((s.q[0] - FRAC_PI_2).abs() < 1e-14);
            assert!((s.q[1] - s.s).abs() < 1e-12);
        }
        assert!(g.max_drift < 1e-12);
    }

    #[test]
    fn radial_line_in_polar_chart() {
        let c = chart_from_id("polar2").unwrap();
        let g = integrate_geodesic(&c, &[1.0, 0.0], &[2.0, 0.0], 1.5, 1e-3).unwrap();
        assert!((g.end().q[0] - 2.5).abs() < 1e-12);
        assert_eq!(g.end().q[1], 0.0);
    }

    #[test]
    fn leaving_the_domain() {
        let c = chart_from_id("polar2").unwrap();
        let e = integrate_geodesic(&c, &[1.0, 0.0], &[-1.0, 0.0], 2.0, 1e-3).unwrap_err();
        assert!(matches!(e, Error::LeftDomain { at } if (at - 1.0).abs() < 2e-3));
    }

    #[test]
    fn coarse_steps_are_rejected() {
        let c = chart_from_id("sphere2:1").unwrap();
        let e = integrate_geodesic(&c, &[0.6, 0.0], &[1.0, 1.0], 1.5, 0.5).unwrap_err();
        assert!(matches!(e, Error::StepTooLarge { .. }));
    }

    #[test]
    fn exp_jacobian_matches_differences() {
        let c = chart_from_id("sphere2:1").unwrap();
        let base = [1.0, 0.3];
        let v = [0.3, -0.4];
        let e = exp_map_with_jacobian(&c, &base, &v, 400).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut p = v;
            p[k] += h;
            let mut m = v;
            m[k] -= h;
            let qp = exp_map(&c, &base, &p, 400).unwrap();
            let qm = exp_map(&c, &base, &m, 400).unwrap();
            for a in 0..2 {
                assert!(((qp[a] - qm[a]) / (2.0 * h) - e.jacobian[(a, k)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cartesian_normal_chart_is_identity() {
        let c = chart_from_id("cartesian:2").unwrap();
        let nc = build_normal_chart(&c, &[0.0, 0.0], 1.0, 1000).unwrap();
        let q = nc.forward(&[0.3, -0.2]).unwrap();
        assert!((q[0] - 0.3).abs() < 1e-13 && (q[1] + 0.2).abs() < 1e-13);
        let g = nc.pullback_metric(&[0.3, -0.2]).unwrap();
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-13);
    }

    #[test]
    fn sphere_pole_exp_map() {
        // stereographic chart centred on the pole: q = tan(s/2) (cos α, sin α)
        let c = chart_from_id("stereo:2:1").unwrap();
        let nc = build_normal_chart(&c, &[0.0, 0.0], 1.0, 1000).unwrap();
        assert!((nc.frame() - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
        let (s, alpha) = (0.7f64, 0.4f64);
        let q = nc.forward(&[s * alpha.cos(), s * alpha.sin()]).unwrap();
        let rho = (s / 2.0).tan();
        assert!((q[0] - rho * alpha.cos()).abs() < 1e-12);
        assert!((q[1] - rho * alpha.sin()).abs() < 1e-12);
    }

    #[test]
    fn round_trip() {
        let c = chart_from_id("sphere2:1").unwrap();
        let nc = build_normal_chart(&c, &[1.1, 0.4], 0.6, 1000).unwrap();
        for y in [[0.1, 0.2], [-0.4, 0.3], [0.05, -0.5]] {
            let q = nc.forward(&y).unwrap();
            let back = nc.inverse(&q).unwrap();
            assert!((back[0] - y[0]).abs() < 1e-8 && (back[1] - y[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn normal_chart_is_euclidean_to_first_order() {
        let c = chart_from_id("sphere2:1").unwrap();
        let nc = build_normal_chart(&c, &[1.1, 0.4], 0.5, 1000).unwrap();
        let chart = nc.chart();
        let jet = chart.metric_jet(&[0.0, 0.0], Order::First).unwrap();
        assert!((&jet.value - DMatrix::identity(2, 2)).amax() < 1e-10);
        assert!(jet.first.iter().all(|m| m.amax() < 1e-6));
    }

    #[test]
    fn flat_expansion_vanishes() {
        let c = chart_from_id("polar2").unwrap();
        let nc = build_normal_chart(&c, &[1.0, 0.0], 0.3, 1000).unwrap();
        let fit = metric_expansion_fit(&nc, 0.05).unwrap();
        assert!(fit.fitted.max_abs() < 1e-8);
        assert_eq!(fit.predicted.max_abs(), 0.0);
    }

    #[test]
    fn shooting_recovers_distance() {
        let c = chart_from_id("sphere2:1").unwrap();
        let shot = shoot(&c, &[FRAC_PI_2, 0.0], &[FRAC_PI_2, 1.2], 200, None).unwrap();
        assert!((shot.distance - 1.2).abs() < 1e-12);
        assert!(shot.residual <= SHOOTING_TOL);
    }
}
