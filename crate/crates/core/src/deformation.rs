//! Small deformations `q = x + ε f(x)` of Cartesian coordinates on flat space.
//!
//! The flat metric pulled back to `q` is `ω(q) = M(x)ᵀ M(x)` with
//! `M = (I + ε ∂f)^{-1}` evaluated at `x = x(q)`. Its DeWitt QMP is, to first
//! order in ε, `(ε ħ²/4m) Δ(tr ∂f)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chart::{Axis, JetSource, MetricChart, MetricField, MetricJet, Order};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quantization::qmp_dewitt;
use crate::tensor::Tensor3;
use crate::Constants;

/// Fixed-point iterations allowed when inverting the deformation map.
pub const MAX_INVERSE_ITERATIONS: usize = 30;
/// Residual `|x + εf(x) − q|` above which inversion fails.
pub const INVERSE_TOL: f64 = 1e-12;

/// Value and partials to order 3 of a vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJet {
    pub value: DVector<f64>,
    /// `∂_c f^a` at `(a, c)`.
    pub d1: DMatrix<f64>,
    /// `d2[a][(c, d)] = ∂_c ∂_d f^a`.
    pub d2: Vec<DMatrix<f64>>,
    /// `d3[a][(c, d, e)] = ∂_c ∂_d ∂_e f^a`.
    pub d3: Vec<Tensor3>,
}

impl FieldJet {
    pub fn zeros(n: usize) -> Self {
        Self {
            value: DVector::zeros(n),
            d1: DMatrix::zeros(n, n),
            d2: vec![DMatrix::zeros(n, n); n],
            d3: vec![Tensor3::zeros(n); n],
        }
    }

    /// `tr ∂f = ∂_a f^a`.
    pub fn divergence(&self) -> f64 {
        self.d1.trace()
    }

    /// `Δ(tr ∂f) = ∂_c ∂_c ∂_a f^a`.
    pub fn laplacian_of_divergence(&self) -> f64 {
        let n = self.value.len();
        (0..n)
            .flat_map(|a| (0..n).map(move |c| (a, c)))
            .map(|(a, c)| self.d3[a][(a, c, c)])
            .sum()
    }
}

/// A smooth map `x ↦ f(x)` on `ℝⁿ` with partials to order 3.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn jet(&self, x: &[f64]) -> FieldJet;

    fn value(&self, x: &[f64]) -> DVector<f64> {
        self.jet(x).value
    }
}

/// `f = (sin x¹, 0, …)`.
#[derive(Debug, Clone, Copy)]
pub struct SinX {
    pub n: usize,
}

impl VectorField for SinX {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, x: &[f64]) -> FieldJet {
        let (s, c) = x[0].sin_cos();
        let mut j = FieldJet::zeros(self.n);
        j.value[0] = s;
        j.d1[(0, 0)] = c;
        j.d2[0][(0, 0)] = -s;
        j.d3[0][(0, 0, 0)] = -c;
        j
    }

    fn value(&self, x: &[f64]) -> DVector<f64> {
        let mut v = DVector::zeros(self.n);
        v[0] = x[0].sin();
        v
    }
}

/// `f = A x`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub a: DMatrix<f64>,
}

impl VectorField for Linear {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn jet(&self, x: &[f64]) -> FieldJet {
        let mut j = FieldJet::zeros(self.dim());
        j.value = &self.a * DVector::from_column_slice(x);
        j.d1 = self.a.clone();
        j
    }
}

/// `f = (exp(−|x|²/2σ²), 0, …)`: a localized shift along the first axis.
#[derive(Debug, Clone, Copy)]
pub struct GaussianBump {
    pub n: usize,
    pub sigma: f64,
}

impl VectorField for GaussianBump {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, x: &[f64]) -> FieldJet {
        let n = self.n;
        let s2 = self.sigma * self.sigma;
        let g = (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * s2)).exp();
        let k = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut j = FieldJet::zeros(n);
        j.value[0] = g;
        for c in 0..n {
            j.d1[(0, c)] = -x[c] / s2 * g;
            for d in 0..n {
                let h = x[c] * x[d] / (s2 * s2) - k(c, d) / s2;
                j.d2[0][(c, d)] = h * g;
                for e in 0..n {
                    j.d3[0][(c, d, e)] = ((k(c, e) * x[d] + k(d, e) * x[c]) / (s2 * s2)
                        - h * x[e] / s2)
                        * g;
                }
            }
        }
        j
    }
}

/// Components `f_a` given as expressions in `x1..xn`, differentiated symbolically.
#[derive(Debug, Clone)]
pub struct ExprField {
    n: usize,
    // comps[a] = (f^a, ∂f^a, ∂∂f^a, ∂∂∂f^a)
    comps: Vec<ExprComponent>,
}

#[derive(Debug, Clone)]
struct ExprComponent {
    value: Expr,
    d1: Vec<Expr>,
    d2: Vec<Vec<Expr>>,
    d3: Vec<Vec<Vec<Expr>>>,
}

impl ExprField {
    /// Parses lines `f_a = <expr>` (1-based `a`) with `#` comments.
    /// Missing components are zero.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_dim(text, 0)
    }

    /// As [`ExprField::parse`], padding with zero components up to dimension `n`.
    pub fn parse_with_dim(text: &str, n: usize) -> Result<Self> {
        let mut entries: Vec<(usize, usize, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let (lhs, rhs) = line
                .split_once('=')
                .ok_or_else(|| err("expected `f_a = expr`".into()))?;
            let a: usize = lhs
                .trim()
                .strip_prefix("f_")
                .and_then(|s| s.parse().ok())
                .filter(|a| *a > 0)
                .ok_or_else(|| err(format!("unknown entry `{}`", lhs.trim())))?;
            entries.push((lineno + 1, a - 1, rhs.trim().to_string()));
        }
        let given = entries.iter().map(|e| e.1 + 1).max().ok_or(Error::Parse {
            line: 0,
            message: "no f_a entries".into(),
        })?;
        if n > 0 && given > n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: given,
            });
        }
        let n = n.max(given);
        let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut exprs: Vec<Option<Expr>> = vec![None; n];
        for (line, a, src) in entries {
            if exprs[a].is_some() {
                return Err(Error::Parse {
                    line,
                    message: format!("component f_{} given twice", a + 1),
                });
            }
            exprs[a] = Some(Expr::parse(&src, &vars).map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse { line, message },
                other => other,
            })?);
        }
        let comps = exprs
            .into_iter()
            .map(|e| {
                let value = e.unwrap_or(Expr::Const(0.0));
                let d1: Vec<Expr> = (0..n).map(|c| value.diff(c)).collect();
                let d2: Vec<Vec<Expr>> =
                    d1.iter().map(|e| (0..n).map(|c| e.diff(c)).collect()).collect();
                let d3 = d2
                    .iter()
                    .map(|row| row.iter().map(|e| (0..n).map(|c| e.diff(c)).collect()).collect())
                    .collect();
                ExprComponent { value, d1, d2, d3 }
            })
            .collect();
        Ok(Self { n, comps })
    }
}

impl VectorField for ExprField {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, x: &[f64]) -> FieldJet {
        let n = self.n;
        let mut j = FieldJet::zeros(n);
        for (a, c) in self.comps.iter().enumerate() {
            j.value[a] = c.value.eval(x);
            for p in 0..n {
                j.d1[(a, p)] = c.d1[p].eval(x);
                for r in 0..n {
                    j.d2[a][(p, r)] = c.d2[p][r].eval(x);
                    for s in 0..n {
                        j.d3[a][(p, r, s)] = c.d3[p][r][s].eval(x);
                    }
                }
            }
        }
        j
    }
}

/// `q = x + ε f(x)`.
#[derive(Clone)]
pub struct DeformationField {
    pub epsilon: f64,
    pub f: Arc<dyn VectorField>,
}

impl fmt::Debug for DeformationField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeformationField")
            .field("epsilon", &self.epsilon)
            .field("dim", &self.f.dim())
            .finish()
    }
}

impl DeformationField {
    pub fn new(epsilon: f64, f: Arc<dyn VectorField>) -> Result<Self> {
        if !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("bad epsilon {epsilon}")));
        }
        Ok(Self { epsilon, f })
    }

    /// Built-in fields: `sin-x`, `linear:a11,a12,…` (row-major, n² entries),
    /// `gaussian-bump:σ`; anything else is read as an expression file.
    pub fn from_id(epsilon: f64, n: usize, id: &str) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let bad = || Error::InvalidArgument(format!("bad deformation field `{id}`"));
        let f: Arc<dyn VectorField> = match id.split_once(':').unwrap_or((id, "")) {
            ("sin-x", "") => Arc::new(SinX { n }),
            ("linear", entries) => {
                let v: Vec<f64> = entries
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad())?;
                if v.len() != n * n {
                    return Err(Error::DimensionMismatch {
                        expected: n * n,
                        got: v.len(),
                    });
                }
                Arc::new(Linear {
                    a: DMatrix::from_row_slice(n, n, &v),
                })
            }
            ("gaussian-bump", s) => {
                let sigma: f64 = s.parse().map_err(|_| bad())?;
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(bad());
                }
                Arc::new(GaussianBump { n, sigma })
            }
            _ if Path::new(id).is_file() => {
                let text = std::fs::read_to_string(id)
                    .map_err(|e| Error::InvalidArgument(format!("cannot read {id}: {e}")))?;
                Arc::new(ExprField::parse_with_dim(&text, n)?)
            }
            _ => return Err(bad()),
        };
        Self::new(epsilon, f)
    }

    pub fn from_text(epsilon: f64, n: usize, text: &str) -> Result<Self> {
        Self::new(epsilon, Arc::new(ExprField::parse_with_dim(text, n)?))
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// `q(x) = x + ε f(x)`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let f = self.f.value(x);
        x.iter().zip(f.iter()).map(|(x, f)| x + self.epsilon * f).collect()
    }

    /// `x(q)` by the fixed-point iteration `x ← q − ε f(x)`.
    pub fn inverse(&self, q: &[f64]) -> Result<Vec<f64>> {
        let scale = q.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut x = q.to_vec();
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_INVERSE_ITERATIONS {
            let f = self.f.value(&x);
            let next: Vec<f64> = q.iter().zip(f.iter()).map(|(q, f)| q - self.epsilon * f).collect();
            residual = next
                .iter()
                .zip(&x)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            x = next;
            // Iterate to machine precision so derived quantities stay smooth in q.
            if residual <= 2.0 * f64::EPSILON * scale {
                break;
            }
        }
        if !(residual <= INVERSE_TOL * scale) {
            return Err(Error::NotInvertible { point: q.to_vec() });
        }
        Ok(x)
    }

    fn jacobian(&self, jet: &FieldJet) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::identity(n, n) + self.epsilon * &jet.d1
    }
}

struct DeformedMetric {
    d: DeformationField,
}

impl DeformedMetric {
    // Returns (x, field jet, M = (∂q/∂x)^{-1}).
    fn frame(&self, q: &[f64]) -> Result<(Vec<f64>, FieldJet, DMatrix<f64>)> {
        let x = self.d.inverse(q)?;
        let jet = self.d.f.jet(&x);
        let j = self.d.jacobian(&jet);
        if !(j.determinant() > 0.0) {
            return Err(Error::NotInvertible { point: q.to_vec() });
        }
        let m = j
            .try_inverse()
            .ok_or_else(|| Error::NotInvertible { point: q.to_vec() })?;
        Ok((x, jet, m))
    }
}

impl MetricField for DeformedMetric {
    fn dim(&self) -> usize {
        self.d.dim()
    }

    fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let (_, _, m) = self.frame(q)?;
        Ok(m.transpose() * m)
    }

    fn analytic_jet(&self, q: &[f64], order: Order) -> Option<Result<MetricJet>> {
        Some(self.jet(q, order))
    }
}

impl DeformedMetric {
    fn jet(&self, q: &[f64], order: Order) -> Result<MetricJet> {
        let n = self.dim();
        let eps = self.d.epsilon;
        let (_, fj, m) = self.frame(q)?;
        let mut out = MetricJet::zeros(n, order);
        out.value = m.transpose() * &m;
        if order == Order::Value {
            return Ok(out);
        }
        // h[e] = ∂_e (∂q/∂x) / ε, i.e. h[e][(a, b)] = ∂_b ∂_e f^a.
        let h: Vec<DMatrix<f64>> = (0..n)
            .map(|e| DMatrix::from_fn(n, n, |a, b| fj.d2[a][(b, e)]))
            .collect();
        // x-derivatives of M and ω.
        let dm: Vec<DMatrix<f64>> = h.iter().map(|he| -(eps * (&m * he * &m))).collect();
        let dw: Vec<DMatrix<f64>> = dm
            .iter()
            .map(|d| d.transpose() * &m + m.transpose() * d)
            .collect();
        // ∂/∂q^c = M_{ec} ∂/∂x^e
        for c in 0..n {
            out.first[c] = (0..n).fold(DMatrix::zeros(n, n), |acc, e| acc + m[(e, c)] * &dw[e]);
        }
        if order == Order::Second {
            let mut ddw = vec![vec![DMatrix::zeros(n, n); n]; n];
            for e in 0..n {
                for g in e..n {
                    let heg = DMatrix::from_fn(n, n, |a, b| fj.d3[a][(b, e, g)]);
                    let ddm = -(eps * (&dm[g] * &h[e] * &m + &m * &heg * &m + &m * &h[e] * &dm[g]));
                    let v = ddm.transpose() * &m
                        + dm[e].transpose() * &dm[g]
                        + dm[g].transpose() * &dm[e]
                        + m.transpose() * &ddm;
                    ddw[g][e] = v.clone();
                    ddw[e][g] = v;
                }
            }
            for c in 0..n {
                for d in c..n {
                    let mut s = DMatrix::zeros(n, n);
                    for e in 0..n {
                        // ∂_{q^d} M_{ec} = M_{gd} (∂_g M)_{ec}
                        let dmec: f64 = (0..n).map(|g| m[(g, d)] * dm[g][(e, c)]).sum();
                        s += dmec * &dw[e];
                        for g in 0..n {
                            s += m[(e, c)] * m[(g, d)] * &ddw[e][g];
                        }
                    }
                    // Exact symmetry in (c, d) up to rounding.
                    out.second[d][c] = s.clone();
                    out.second[c][d] = s;
                }
            }
        }
        Ok(out)
    }
}

/// The chart `q = x + ε f(x)` on flat `ℝⁿ`, with analytic jets.
pub fn deformed_chart(d: &DeformationField, domain: Vec<Axis>) -> Result<MetricChart> {
    let id = format!("deformed:{}", d.epsilon);
    MetricChart::new(
        id,
        domain,
        JetSource::Analytic,
        Arc::new(DeformedMetric { d: d.clone() }),
    )
}

/// `(ε ħ²/4m) Δ(tr ∂f)` at `q`.
pub fn qmp_deformation_first_order(d: &DeformationField, consts: &Constants, q: &[f64]) -> Result<f64> {
    if q.len() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            got: q.len(),
        });
    }
    let jet = d.f.jet(q);
    Ok(d.epsilon * consts.hbar * consts.hbar / (4.0 * consts.mass) * jet.laplacian_of_divergence())
}

/// Exact versus first-order QMP at one ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub exact: f64,
    pub first_order: f64,
    pub gap: f64,
}

/// Exact deformed-chart QMP against the first-order formula at `q`, for each ε.
pub fn convergence_study(
    n: usize,
    field_id: &str,
    epsilons: &[f64],
    consts: &Constants,
    q: &[f64],
) -> Result<Vec<ConvergenceRow>> {
    epsilons
        .iter()
        .map(|&epsilon| {
            let d = DeformationField::from_id(epsilon, n, field_id)?;
            let chart = deformed_chart(&d, vec![Axis::unbounded(); n])?;
            let exact = qmp_dewitt(&chart, consts, q)?.v_dw;
            let first_order = qmp_deformation_first_order(&d, consts, q)?;
            Ok(ConvergenceRow {
                epsilon,
                exact,
                first_order,
                gap: (exact - first_order).abs(),
            })
        })
        .collect()
}

/// `gap[k] / gap[k+1]` for consecutive rows.
pub fn gap_ratios(rows: &[ConvergenceRow]) -> Vec<f64> {
    rows.windows(2).map(|w| w[0].gap / w[1].gap).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::JetSource;

    fn chart(eps: f64, id: &str) -> MetricChart {
        let d = DeformationField::from_id(eps, 2, id).unwrap();
        deformed_chart(&d, vec![Axis::unbounded(); 2]).unwrap()
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let c = chart(0.0, "sin-x");
        let jet = c.metric_jet(&[0.3, -1.0], Order::Second).unwrap();
        assert_eq!(jet.value, DMatrix::identity(2, 2));
        assert!(jet.first.iter().all(|m| m.amax() == 0.0));
        assert_eq!(qmp_dewitt(&c, &Constants::default(), &[0.3, -1.0]).unwrap().v_dw, 0.0);
    }

    #[test]
    fn linear_pullback() {
        let eps = 0.1;
        let c = chart(eps, "linear:1,2,-0.5,0.3");
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.3]);
        let inv = (DMatrix::identity(2, 2) + eps * a).try_inverse().unwrap();
        let expect = inv.transpose() * &inv;
        let jet = c.metric_jet(&[0.7, 0.2], Order::Second).unwrap();
        assert!((&jet.value - expect).amax() < 1e-13);
        assert!(jet.first.iter().all(|m| m.amax() < 1e-14));
    }

    #[test]
    fn sin_first_order_metric() {
        let eps = 0.01;
        let c = chart(eps, "sin-x");
        for q1 in [0.0, 0.8, 2.0] {
            let w = c.metric(&[q1, 0.0]).unwrap();
            assert!((w[(0, 0)] - (1.0 - 2.0 * eps * q1.cos())).abs() < 10.0 * eps * eps);
            assert_eq!(w[(1, 1)], 1.0);
        }
    }

    #[test]
    fn analytic_jets_match_numeric() {
        for id in ["sin-x", "gaussian-bump:0.7", "linear:0.3,1,0,-1"] {
            let a = chart(0.2, id);
            let n = a.with_source(JetSource::Numeric);
            let q = [0.4, -0.3];
            let ja = a.metric_jet(&q, Order::Second).unwrap();
            let jn = n.metric_jet(&q, Order::Second).unwrap();
            for c in 0..2 {
                assert!((&ja.first[c] - &jn.first[c]).amax() < 1e-8, "{id}");
                for d in 0..2 {
                    assert!((&ja.second[c][d] - &jn.second[c][d]).amax() < 1e-6, "{id}");
                }
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        let d = DeformationField::from_id(0.05, 2, "gaussian-bump:1").unwrap();
        let x = [0.2, 0.6];
        let q = d.forward(&x);
        let back = d.inverse(&q).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-15 && (back[1] - x[1]).abs() < 1e-15);
        let big = DeformationField::from_id(3.0, 2, "sin-x").unwrap();
        assert!(matches!(big.inverse(&[0.1, 0.0]), Err(Error::NotInvertible { .. })));
    }

    #[test]
    fn first_order_formula_cases() {
        let k = Constants::default();
        let q = [0.4, 0.1];
        let lin = DeformationField::from_id(0.01, 2, "linear:0,1,-1,0").unwrap();
        assert_eq!(qmp_deformation_first_order(&lin, &k, &q).unwrap(), 0.0);
        let zero = DeformationField::from_text(0.01, 2, "f_1 = 2\nf_2 = -1").unwrap();
        assert_eq!(qmp_deformation_first_order(&zero, &k, &q).unwrap(), 0.0);
        let s = DeformationField::from_id(0.01, 2, "sin-x").unwrap();
        let v = qmp_deformation_first_order(&s, &k, &q).unwrap();
        assert!((v + 0.01 / 4.0 * q[0].cos()).abs() < 1e-16);
    }

    #[test]
    fn expression_field_matches_builtin() {
        let e = DeformationField::from_text(0.02, 2, "# shift\nf_1 = sin(x1)").unwrap();
        let b = DeformationField::from_id(0.02, 2, "sin-x").unwrap();
        let x = [0.9, 0.3];
        let (je, jb) = (e.f.jet(&x), b.f.jet(&x));
        assert!((je.d1 - jb.d1).amax() < 1e-15);
        assert!((je.d3[0][(0, 0, 0)] - jb.d3[0][(0, 0, 0)]).abs() < 1e-15);
        assert!(matches!(
            DeformationField::from_text(0.1, 2, "f_1 = x1\ng = 2"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn gaussian_third_derivatives() {
        let g = GaussianBump { n: 2, sigma: 0.8 };
        let x = [0.3, -0.5];
        let j = g.jet(&x);
        let h = 1e-5;
        for e in 0..2 {
            let mut p = x;
            p[e] += h;
            let mut m = x;
            m[e] -= h;
            let (jp, jm) = (g.jet(&p), g.jet(&m));
            for c in 0..2 {
                for d in 0..2 {
                    let fd = (jp.d2[0][(c, d)] - jm.d2[0][(c, d)]) / (2.0 * h);
                    assert!((fd - j.d3[0][(c, d, e)]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn second_order_convergence() {
        let rows = convergence_study(2, "sin-x", &[1e-2, 5e-3, 2.5e-3], &Constants::default(), &[0.3, 0.2])
            .unwrap();
        for r in gap_ratios(&rows) {
            assert!((3.5..=4.5).contains(&r), "{r}");
        }
    }
}
