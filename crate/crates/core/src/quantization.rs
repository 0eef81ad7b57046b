//! Quantum operators of a natural system in a fixed chart.
//!
//! With the coordinates `q^a` taken as the localization observables, the
//! momentum operator is `p̂_b = −iħ(∂_b + ¼ ∂_b ln ω)` on the measure
//! `ω^{1/2} dⁿq` (`ω = det ω_ab`), and the symmetric ordering
//! `Ĥ = (1/2m) p̂_a ω^{ab} p̂_b + V` equals
//! `−(ħ²/2m) Δ + V_DW + V`, where the quantum-mechanical potential
//!
//! ```text
//! V_DW = −(ħ²/2m) ω^{-1/4} ∂_a( ω^{ab} ∂_b ω^{1/4} )
//! ```
//!
//! depends on the chart. The ordering family indexed by `ν` shifts it by
//! `(ν − 2) (ħ²/8m) ∂_a ∂_b ω^{ab}`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Rational64;

use crate::chart::{MetricChart, MetricJet, Order};
use crate::error::{Error, Result};
use crate::fd;
use crate::geometry::inverse;
use crate::grid::{dirichlet_form, Grid, GridSpec};
use crate::Constants;

/// Accepted deviation of `∫ ω^{1/2} |ψ|²` from one.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// QMP pieces at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct QmpValue {
    pub point: Vec<f64>,
    /// DeWitt (ν = 2) potential.
    pub v_dw: f64,
    /// `(ħ²/8m) ∂_a ∂_b ω^{ab}`: shift per unit of `ν − 2`.
    pub nu_correction_density: f64,
    pub v_ext: f64,
}

impl QmpValue {
    pub fn v_nu(&self, nu: f64) -> f64 {
        self.v_dw + (nu - 2.0) * self.nu_correction_density
    }
}

/// Operator ordering of the kinetic term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    /// Laplace–Beltrami Hamiltonian, no QMP.
    Sch,
    /// Symmetric `p̂ ω p̂` ordering.
    Dw,
    /// Member `ν` of the Hermitian ordering family; `Nu(2.0)` equals `Dw`.
    Nu(f64),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Sch => write!(f, "SCH"),
            Variant::Dw => write!(f, "DW"),
            Variant::Nu(nu) => write!(f, "NU:{nu}"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        match up.as_str() {
            "SCH" => Ok(Variant::Sch),
            "DW" => Ok(Variant::Dw),
            _ => {
                let nu = up
                    .strip_prefix("NU:")
                    .or_else(|| up.strip_prefix("NU(").and_then(|r| r.strip_suffix(')')))
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))?;
                Ok(Variant::Nu(nu))
            }
        }
    }
}

/// Value, gradient and Hessian of a complex scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarJet {
    pub value: Complex64,
    pub grad: Vec<Complex64>,
    pub hess: Vec<Vec<Complex64>>,
}

type Eval = dyn Fn(&[f64]) -> Complex64 + Send + Sync;
type JetEval = dyn Fn(&[f64]) -> ScalarJet + Send + Sync;

/// Complex scalar field (a wave function or potential) with optional closed-form jets.
#[derive(Clone)]
pub struct ScalarField {
    eval: Arc<Eval>,
    jet: Option<Arc<JetEval>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("analytic", &self.jet.is_some())
            .finish()
    }
}

impl ScalarField {
    pub fn new(f: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(f),
            jet: None,
        }
    }

    pub fn real(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(move |q| Complex64::new(f(q), 0.0))
    }

    /// Field with closed-form derivatives; `jet` must agree with `f`.
    pub fn with_jet(
        f: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
        jet: impl Fn(&[f64]) -> ScalarJet + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(f),
            jet: Some(Arc::new(jet)),
        }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::with_jet(move |_| c, move |q| {
            let n = q.len();
            ScalarJet {
                value: c,
                grad: vec![Complex64::default(); n],
                hess: vec![vec![Complex64::default(); n]; n],
            }
        })
    }

    pub fn zero() -> Self {
        Self::constant(Complex64::default())
    }

    pub fn is_analytic(&self) -> bool {
        self.jet.is_some()
    }

    pub fn value(&self, q: &[f64]) -> Complex64 {
        (self.eval)(q)
    }

    /// Multiplies the field (and its jets) by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        let eval = self.eval.clone();
        let jet = self.jet.clone();
        Self {
            eval: Arc::new(move |q| eval(q) * c),
            jet: jet.map(|j| -> Arc<JetEval> {
                Arc::new(move |q| {
                    let mut s = j(q);
                    s.value *= c;
                    s.grad.iter_mut().for_each(|g| *g *= c);
                    s.hess.iter_mut().flatten().for_each(|h| *h *= c);
                    s
                })
            }),
        }
    }

    /// Jet at `q`: closed form if available, else finite differences.
    pub fn jet(&self, q: &[f64]) -> Result<ScalarJet> {
        if let Some(j) = &self.jet {
            return Ok(j(q));
        }
        let f = |p: &[f64]| Ok((self.eval)(p));
        let value = (self.eval)(q);
        let (grad, hess) = fd::gradient_and_hessian(&f, q, &value, |a| {
            (fd::first_step(q[a]), fd::second_step(q[a]))
        })?;
        Ok(ScalarJet { value, grad, hess })
    }
}

/// Pointwise metric quantities used by the operators.
struct Local {
    inv: DMatrix<f64>,
    /// ∂_a ln ω
    dlog: Vec<f64>,
    /// ∂_a ∂_b ln ω
    ddlog: DMatrix<f64>,
    /// Σ_a ∂_a ω^{ab}
    div_inv: Vec<f64>,
    /// Σ_ab ∂_a ∂_b ω^{ab}
    dd_inv: f64,
}

fn local(jet: &MetricJet) -> Local {
    let n = jet.dim();
    let inv = inverse(&jet.value);
    let a_mats: Vec<DMatrix<f64>> = jet.first.iter().map(|d| &inv * d).collect();
    let dlog: Vec<f64> = a_mats.iter().map(|m| m.trace()).collect();
    // ∂_c ω^{-1} = −ω^{-1} ∂_c ω ω^{-1}
    let dinv: Vec<DMatrix<f64>> = a_mats.iter().map(|m| -(m * &inv)).collect();
    let div_inv = (0..n).map(|b| (0..n).map(|a| dinv[a][(a, b)]).sum()).collect();
    let mut ddlog = DMatrix::zeros(n, n);
    let mut dd_inv = 0.0;
    if !jet.second.is_empty() {
        for a in 0..n {
            for b in 0..n {
                ddlog[(a, b)] =
                    (&inv * &jet.second[a][b]).trace() - (&a_mats[a] * &a_mats[b]).trace();
                // ∂_a ∂_b ω^{-1}, component (a, b)
                let m = &a_mats[a] * &a_mats[b] * &inv + &a_mats[b] * &a_mats[a] * &inv
                    - &inv * &jet.second[a][b] * &inv;
                dd_inv += m[(a, b)];
            }
        }
    }
    Local {
        inv,
        dlog,
        ddlog,
        div_inv,
        dd_inv,
    }
}

/// DeWitt QMP and ν-correction density from a jet of order 2.
pub fn qmp_from_jet(jet: &MetricJet, consts: &Constants) -> (f64, f64) {
    let n = jet.dim();
    let l = local(jet);
    // ω^{-1/4} ∂_a(ω^{ab} ∂_b ω^{1/4}) = ¼[ ¼ ω^{ab} L_a L_b + (∂_a ω^{ab}) L_b + ω^{ab} L_ab ]
    let mut s = 0.0;
    for a in 0..n {
        s += l.div_inv[a] * l.dlog[a];
        for b in 0..n {
            s += l.inv[(a, b)] * (0.25 * l.dlog[a] * l.dlog[b] + l.ddlog[(a, b)]);
        }
    }
    let v_dw = -consts.kinetic() * 0.25 * s;
    let corr = consts.hbar * consts.hbar / (8.0 * consts.mass) * l.dd_inv;
    (v_dw, corr)
}

/// DeWitt QMP at `q`, evaluated with plain partial derivatives in this chart.
pub fn qmp_dewitt(chart: &MetricChart, consts: &Constants, q: &[f64]) -> Result<QmpValue> {
    let jet = chart.metric_jet(q, Order::Second)?;
    let (v_dw, nu_correction_density) = qmp_from_jet(&jet, consts);
    Ok(QmpValue {
        point: q.to_vec(),
        v_dw,
        nu_correction_density,
        v_ext: 0.0,
    })
}

/// QMP of ordering `ν`: `v_dw + (ν − 2) · nu_correction_density`.
pub fn qmp_nu(chart: &MetricChart, consts: &Constants, q: &[f64], nu: f64) -> Result<f64> {
    Ok(qmp_dewitt(chart, consts, q)?.v_nu(nu))
}

/// `(p̂_b ψ)(q) = −iħ (∂_b ψ + ¼ (∂_b ln ω) ψ)`.
pub fn apply_momentum(
    chart: &MetricChart,
    consts: &Constants,
    b: usize,
    psi: &ScalarField,
    q: &[f64],
) -> Result<Complex64> {
    if b >= chart.dim() {
        return Err(Error::InvalidArgument(format!("axis {b} out of range")));
    }
    let jet = chart.metric_jet(q, Order::First)?;
    let l = local(&jet);
    let s = psi.jet(q)?;
    Ok(Complex64::new(0.0, -consts.hbar) * (s.grad[b] + 0.25 * l.dlog[b] * s.value))
}

pub(crate) fn laplacian(jet: &MetricJet, s: &ScalarJet) -> Complex64 {
    let n = jet.dim();
    let l = local(jet);
    // Δψ = ω^{ab} ∂_a∂_b ψ + (∂_a ω^{ab} + ½ ω^{ab} ∂_a ln ω) ∂_b ψ
    let mut out = Complex64::default();
    for b in 0..n {
        let mut drift = l.div_inv[b];
        for a in 0..n {
            drift += 0.5 * l.inv[(a, b)] * l.dlog[a];
            out += l.inv[(a, b)] * s.hess[a][b];
        }
        out += drift * s.grad[b];
    }
    out
}

/// `Δψ = ω^{-1/2} ∂_a( ω^{1/2} ω^{ab} ∂_b ψ )` at `q`.
pub fn apply_laplace_beltrami(chart: &MetricChart, psi: &ScalarField, q: &[f64]) -> Result<Complex64> {
    let jet = chart.metric_jet(q, Order::First)?;
    Ok(laplacian(&jet, &psi.jet(q)?))
}

/// `(Ĥψ)(q)` for the requested ordering; `v_ext = None` means zero potential.
pub fn apply_hamiltonian(
    chart: &MetricChart,
    consts: &Constants,
    variant: Variant,
    v_ext: Option<&ScalarField>,
    psi: &ScalarField,
    q: &[f64],
) -> Result<Complex64> {
    let order = if variant == Variant::Sch {
        Order::First
    } else {
        Order::Second
    };
    let jet = chart.metric_jet(q, order)?;
    let s = psi.jet(q)?;
    let v = v_ext.map_or(0.0, |v| v.value(q).re);
    let qmp = match variant {
        Variant::Sch => 0.0,
        Variant::Dw => qmp_from_jet(&jet, consts).0,
        Variant::Nu(nu) => {
            let (dw, corr) = qmp_from_jet(&jet, consts);
            dw + (nu - 2.0) * corr
        }
    };
    Ok(-consts.kinetic() * laplacian(&jet, &s) + (qmp + v) * s.value)
}

/// Which energy functional to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalForm {
    /// `(ħ²/2m) ∂_aψ* ω^{ab} ∂_bψ + |ψ|² V`: the real-field functional whose
    /// Euler–Lagrange operator is the Laplace–Beltrami Hamiltonian.
    Schrodinger,
    /// `(1/2m) (p̂_aψ)* ω^{ab} (p̂_bψ) + |ψ|² V`: the complex-field functional
    /// built from the momentum operator; its mean value is `⟨ψ, Ĥ_DW ψ⟩`.
    Modernized,
}

/// Quadrature nodes with measure weights `ω^{1/2}` times cell volume.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub grid: Grid,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(chart: &MetricChart, spec: &GridSpec) -> Result<Self> {
        let grid = Grid::build(chart, spec)?;
        let vol = grid.cell_volume();
        let weights = (0..grid.len())
            .map(|i| Ok(chart.metric(&grid.point(i))?.determinant().sqrt() * vol))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { grid, weights })
    }

    /// `⟨a, b⟩ = Σ w a* b` over node values.
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| x.conj() * y * *w)
            .sum()
    }

    pub fn sample(&self, psi: &ScalarField) -> Vec<Complex64> {
        (0..self.grid.len()).map(|i| psi.value(&self.grid.point(i))).collect()
    }

    /// Node values of a pointwise operator applied to a field.
    pub fn sample_with(
        &self,
        op: impl Fn(&[f64]) -> Result<Complex64>,
    ) -> Result<Vec<Complex64>> {
        (0..self.grid.len()).map(|i| op(&self.grid.point(i))).collect()
    }

    pub fn norm_sqr(&self, psi: &ScalarField) -> f64 {
        let v = self.sample(psi);
        self.inner(&v, &v).re
    }
}

/// Rescales `psi` to unit norm under the measure `ω^{1/2} dⁿq`.
pub fn normalize(quad: &Quadrature, psi: &ScalarField) -> ScalarField {
    let n = quad.norm_sqr(psi).sqrt();
    psi.scaled(Complex64::new(1.0 / n, 0.0))
}

/// Energy mean value of `psi` by trapezoidal quadrature on `spec`.
pub fn energy_functional(
    chart: &MetricChart,
    consts: &Constants,
    v_ext: Option<&ScalarField>,
    psi: &ScalarField,
    spec: &GridSpec,
    form: FunctionalForm,
) -> Result<f64> {
    let quad = Quadrature::new(chart, spec)?;
    let norm = quad.norm_sqr(psi);
    if (norm - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { norm });
    }
    let n = chart.dim();
    let mut total = 0.0;
    for (i, w) in quad.weights.iter().enumerate() {
        let q = quad.grid.point(i);
        let jet = chart.metric_jet(&q, Order::First)?;
        let l = local(&jet);
        let s = psi.jet(&q)?;
        let grad: Vec<Complex64> = match form {
            FunctionalForm::Schrodinger => s.grad.clone(),
            FunctionalForm::Modernized => (0..n)
                .map(|a| s.grad[a] + 0.25 * l.dlog[a] * s.value)
                .collect(),
        };
        let mut kin = 0.0;
        for a in 0..n {
            for b in 0..n {
                kin += l.inv[(a, b)] * (grad[a].conj() * grad[b]).re;
            }
        }
        let v = v_ext.map_or(0.0, |v| v.value(&q).re);
        total += w * (consts.kinetic() * kin + s.value.norm_sqr() * v);
    }
    Ok(total)
}

/// `⟨ψ, Ĥψ⟩` by the same quadrature, with the operator applied pointwise.
pub fn expectation(
    chart: &MetricChart,
    consts: &Constants,
    variant: Variant,
    v_ext: Option<&ScalarField>,
    psi: &ScalarField,
    spec: &GridSpec,
) -> Result<Complex64> {
    let quad = Quadrature::new(chart, spec)?;
    let h = quad.sample_with(|q| apply_hamiltonian(chart, consts, variant, v_ext, psi, q))?;
    Ok(quad.inner(&quad.sample(psi), &h))
}

/// Discrete modernized functional on grid values `psi`: the Dirichlet form of
/// `φ = ω^{1/4} ψ` with coefficients `ω^{ab}`, plus the potential term.
/// `psi` must be normalized under the node weights.
pub fn discrete_energy_functional(
    chart: &MetricChart,
    consts: &Constants,
    v_ext: Option<&ScalarField>,
    spec: &GridSpec,
    psi: &[Complex64],
) -> Result<f64> {
    let quad = Quadrature::new(chart, spec)?;
    if psi.len() != quad.grid.len() {
        return Err(Error::DimensionMismatch {
            expected: quad.grid.len(),
            got: psi.len(),
        });
    }
    let norm: f64 = quad
        .weights
        .iter()
        .zip(psi)
        .map(|(w, z)| w * z.norm_sqr())
        .sum();
    if (norm - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { norm });
    }
    let mut coef = Vec::with_capacity(psi.len());
    let mut phi = Vec::with_capacity(psi.len());
    let mut pot = 0.0;
    for (i, (w, z)) in quad.weights.iter().zip(psi).enumerate() {
        let q = quad.grid.point(i);
        let m = chart.metric(&q)?;
        phi.push(*z * m.determinant().powf(0.25));
        coef.push(inverse(&m));
        pot += w * z.norm_sqr() * v_ext.map_or(0.0, |v| v.value(&q).re);
    }
    Ok(consts.kinetic() * dirichlet_form(&quad.grid, &coef, &phi) + pot)
}

/// The conformal-coupling coefficient `(n−1)/(4n)` against the normal-coordinate
/// coefficient `1/6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConformalComparison {
    pub n: u32,
    pub conformal: Rational64,
    pub normal_coordinate: Rational64,
    pub equal: bool,
}

pub fn conformal_coefficient(n: u32) -> Result<ConformalComparison> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let conformal = Rational64::new(i64::from(n) - 1, 4 * i64::from(n));
    let normal_coordinate = Rational64::new(1, 6);
    Ok(ConformalComparison {
        n,
        conformal,
        normal_coordinate,
        equal: conformal == normal_coordinate,
    })
}
