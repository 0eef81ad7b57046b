//! Built-in charts addressable by string id, and charts loaded from
//! expression files.
//!
//! | id | coordinates | metric |
//! |----|-------------|--------|
//! | `cartesian:n` | `x¹..xⁿ` | `δ_ab` |
//! | `polar2` | `(r, φ)` | `diag(1, r²)` |
//! | `sphere2:a` | `(θ, φ)` | `a² diag(1, sin²θ)` |
//! | `sphere3:a` | `(χ, θ, φ)` | `a² diag(1, sin²χ, sin²χ sin²θ)` |
//! | `stereo:n:a` | stereographic `x¹..xⁿ` on the n-sphere | `4a²/(1+x·x)² δ_ab` |
//! | `circle-deformed:eps` | `q ∈ [0, 2π)` | `(1 + ε cos q)²` |
//! | `plane-deformed:eps:f-id` | `q = x + ε f(x)` | flat metric pulled back |

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::chart::{Axis, JetSource, MetricChart, MetricField, MetricJet, Order};
use crate::deformation::{deformed_chart, DeformationField};
use crate::error::{Error, Result};
use crate::expr::Expr;

/// Builds a chart from its catalog id (see the module table).
pub fn chart_from_id(id: &str) -> Result<MetricChart> {
    let parts: Vec<&str> = id.split(':').collect();
    let unknown = || Error::UnknownChart(id.to_string());
    let num = |s: &str| s.parse::<f64>().map_err(|_| unknown());
    let dim = |s: &str| match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(unknown()),
    };
    let positive = |v: f64| if v > 0.0 { Ok(v) } else { Err(unknown()) };
    match parts.as_slice() {
        ["cartesian", n] => {
            let n = dim(n)?;
            MetricChart::new(
                id,
                vec![Axis::unbounded(); n],
                JetSource::Analytic,
                Arc::new(Euclidean { n }),
            )
        }
        ["polar2"] => MetricChart::new(
            id,
            vec![Axis::open(0.0, f64::INFINITY), Axis::periodic(0.0, 2.0 * PI)],
            JetSource::Analytic,
            Arc::new(Polar),
        ),
        ["sphere2", a] => MetricChart::new(
            id,
            vec![Axis::open(0.0, PI), Axis::periodic(0.0, 2.0 * PI)],
            JetSource::Analytic,
            Arc::new(Sphere2 {
                a: positive(num(a)?)?,
            }),
        ),
        ["sphere3", a] => MetricChart::new(
            id,
            vec![
                Axis::open(0.0, PI),
                Axis::open(0.0, PI),
                Axis::periodic(0.0, 2.0 * PI),
            ],
            JetSource::Analytic,
            Arc::new(Sphere3 {
                a: positive(num(a)?)?,
            }),
        ),
        ["stereo", n, a] => {
            let n = dim(n)?;
            MetricChart::new(
                id,
                vec![Axis::unbounded(); n],
                JetSource::Analytic,
                Arc::new(Stereographic {
                    n,
                    a: positive(num(a)?)?,
                }),
            )
        }
        ["circle-deformed", eps] => {
            let eps = num(eps)?;
            if eps.abs() >= 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "circle deformation needs |eps| < 1, got {eps}"
                )));
            }
            MetricChart::new(
                id,
                vec![Axis::periodic(0.0, 2.0 * PI)],
                JetSource::Analytic,
                Arc::new(DeformedCircle { eps }),
            )
        }
        ["plane-deformed", eps, rest @ ..] if !rest.is_empty() => {
            let eps = num(eps)?;
            let field = DeformationField::from_id(eps, 2, &rest.join(":"))?;
            let chart = deformed_chart(&field, vec![Axis::unbounded(); 2])?;
            Ok(chart.renamed(id))
        }
        _ => Err(unknown()),
    }
}

/// Resolves either a catalog id or a path to an expression file.
pub fn resolve_chart(spec: &str) -> Result<MetricChart> {
    match chart_from_id(spec) {
        Ok(c) => Ok(c),
        Err(Error::UnknownChart(_)) if Path::new(spec).is_file() => chart_from_file(spec),
        Err(e) => Err(e),
    }
}

impl MetricChart {
    pub(crate) fn renamed(self, id: &str) -> MetricChart {
        MetricChart::new(id, self.domain().to_vec(), self.source(), self.field().clone())
            .expect("renaming keeps a valid chart")
    }
}

#[derive(Debug)]
struct Euclidean {
    n: usize,
}

impl MetricField for Euclidean {
    fn dim(&self) -> usize {
        self.n
    }
    fn metric(&self, _q: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.n, self.n))
    }
    fn analytic_jet(&self, _q: &[f64], order: Order) -> Option<Result<MetricJet>> {
        let mut jet = MetricJet::zeros(self.n, order);
        jet.value = DMatrix::identity(self.n, self.n);
        Some(Ok(jet))
    }
}

#[derive(Debug)]
struct Polar;

impl MetricField for Polar {
    fn dim(&self) -> usize {
        2
    }
    fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, q[0] * q[0]]))
    }
    fn analytic_jet(&self, q: &[f64], order: Order) -> Option<Result<MetricJet>> {
        let r = q[0];
        let mut jet = MetricJet::zeros(2, order);
        jet.set_component(0, 0, 1.0, &[0.0, 0.0], &[&[0.0, 0.0], &[0.0, 0.0]]);
        jet.set_component(1, 1, r * r, &[2.0 * r, 0.0], &[&[2.0, 0.0], &[0.0, 0.0]]);
        Some(Ok(jet))
    }
}

#[derive(Debug)]
struct Sphere2 {
    a: f64,
}

impl MetricField for Sphere2 {
    fn dim(&self) -> usize {
        2
    }
    fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let a2 = self.a * self.a;
        let s = q[0].sin();
        Ok(DMatrix::from_row_slice(2, 2, &[a2, 0.0, 0.0, a2 * s * s]))
    }
    fn analytic_jet(&self, q: &[f64], order: Order) -> Option<Result<MetricJet>> {
        let a2 = self.a * self.a;
        let t = q[0];
        let mut jet = MetricJet::zeros(2, order);
        jet.set_component(0, 0, a2, &[0.0, 0.0], &[&[0.0, 0.0], &[0.0, 0.0]]);
        jet.set_component(
            1,
            1,
            a2 * t.sin().powi(2),
            &[a2 * (2.0 * t).sin(), 0.0],
            &[&[2.0 * a2 * (2.0 * t).cos(), 0.0], &[0.0, 0.0]],
        );
        Some(Ok(jet))
    }
}

#[derive(Debug)]
struct Sphere3 {
    a: f64,
}

impl MetricField for Sphere3 {
    fn dim(&self) -> usize {
        3
    }
    fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let a2 = self.a * self.a;
        let (s1, s2) = (q[0].sin(), q[1].sin());
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = a2;
        m[(1, 1)] = a2 * s1 * s1;
        m[(2, 2)] = a2 * s1 * s1 * s2 * s2;
        Ok(m)
    }
    fn analytic_jet(&self, q: &[f64], order: Order) -> Option<Result<MetricJet>> {
        let a2 = self.a * self.a;
        let (chi, th) = (q[0], q[1]);
        let (a, da, dda) = (
            chi.sin().powi(2),
            (2.0 * chi).sin(),
            2.0 * (2.0 * chi).cos(),
        );
        let (b, db, ddb) = (th.sin().powi(2), (2.0 * th).sin(), 2.0 * (2.0 * th).cos());
        let zero = [0.0; 3];
        let mut jet = MetricJet::zeros(3, order);
        jet.set_component(0, 0, a2, &zero, &[&zero, &zero, &zero]);
        jet.set_component(
            1,
            1,
            a2 * a,
            &[a2 * da, 0.0, 0.0],
            &[&[a2 * dda, 0.0, 0.0], &zero, &zero],
        );
        jet.set_component(
            2,
            2,
            a2 * a * b,
            &[a2 * da * b, a2 * a * db, 0.0],
            &[
                &[a2 * dda * b, a2 * da * db, 0.0],
                &[a2 * da * db, a2 * a * ddb, 0.0],
                &zero,
            ],
        );
        Some(Ok(jet))
    }
}

#[derive(Debug)]
struct Stereographic {
    n: usize,
    a: f64,
}

impl MetricField for Stereographic {
    fn dim(&self) -> usize {
        self.n
    }
    fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let rho2: f64 = q.iter().map(|x| x * x).sum();
        let c = 4.0 * self.a * self.a / (1.0 + rho2).powi(2);
        Ok(DMatrix::identity(self.n, self.n) * c)
    }
    fn analytic_jet(&self, q: &[f64], order: Order) -> Option<Result<MetricJet>> {
        let n = self.n;
        let a2 = self.a * self.a;
        let p = 1.0 + q.iter().map(|x| x * x).sum::<f64>();
        let c = 4.0 * a2 / (p * p);
        let grad: Vec<f64> = q.iter().map(|x| -16.0 * a2 * x / p.powi(3)).collect();
        let hess: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        -16.0 * a2 * delta / p.powi(3) + 96.0 * a2 * q[i] * q[j] / p.powi(4)
                    })
                    .collect()
            })
            .collect();
        let rows: Vec<&[f64]> = hess.iter().map(|r| r.as_slice()).collect();
        let mut jet = MetricJet::zeros(n, order);
        for i in 0..n {
            jet.set_component(i, i, c, &grad, &rows);
        }
        Some(Ok(jet))
    }
}

#[derive(Debug)]
struct DeformedCircle {
    eps: f64,
}

impl MetricField for DeformedCircle {
    fn dim(&self) -> usize {
        1
    }
    fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let j = 1.0 + self.eps * q[0].cos();
        Ok(DMatrix::from_element(1, 1, j * j))
    }
    fn analytic_jet(&self, q: &[f64], order: Order) -> Option<Result<MetricJet>> {
        let e = self.eps;
        let (s, c) = q[0].sin_cos();
        let j = 1.0 + e * c;
        let mut jet = MetricJet::zeros(1, order);
        jet.set_component(
            0,
            0,
            j * j,
            &[-2.0 * e * s * j],
            &[&[-2.0 * e * c * j + 2.0 * e * e * s * s]],
        );
        Some(Ok(jet))
    }
}

/// Metric whose components are infix expressions in `q1..qn`, with jets from
/// symbolic differentiation.
#[derive(Debug, Clone)]
pub struct ExprMetric {
    n: usize,
    // Upper-triangle components (a <= b), `None` meaning identically zero.
    comps: Vec<Vec<Option<Component>>>,
}

#[derive(Debug, Clone)]
struct Component {
    value: Expr,
    first: Vec<Expr>,
    second: Vec<Vec<Expr>>,
}

impl Component {
    fn new(value: Expr, n: usize) -> Self {
        let first: Vec<Expr> = (0..n).map(|c| value.diff(c)).collect();
        let second = first
            .iter()
            .map(|d| (0..n).map(|c| d.diff(c)).collect())
            .collect();
        Self {
            value,
            first,
            second,
        }
    }
}

/// Variable names `q1..qn`.
pub fn coordinate_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("q{i}")).collect()
}

impl ExprMetric {
    /// Parses a chart file: lines `omega_ab = <expr>` (1-based indices, written
    /// `omega_12` or `omega_1_2`), optional `domain_a = lo, hi[, periodic]`
    /// lines, `#` comments. Returns the metric and its domain.
    pub fn parse(text: &str) -> Result<(ExprMetric, Vec<Axis>)> {
        let mut entries: Vec<(usize, usize, usize, String)> = Vec::new();
        let mut domains: Vec<(usize, usize, Axis)> = Vec::new();
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
                .ok_or_else(|| err("expected `name = value`".into()))?;
            let lhs = lhs.trim();
            if let Some(idx) = lhs.strip_prefix("omega_") {
                let (a, b) = parse_pair(idx).ok_or_else(|| err(format!("bad index `{idx}`")))?;
                entries.push((lineno + 1, a, b, rhs.trim().to_string()));
            } else if let Some(idx) = lhs.strip_prefix("domain_") {
                let a: usize = idx
                    .parse()
                    .ok()
                    .filter(|a| *a > 0)
                    .ok_or_else(|| err(format!("bad axis `{idx}`")))?;
                domains.push((lineno + 1, a - 1, parse_axis(rhs).map_err(err)?));
            } else {
                return Err(err(format!("unknown entry `{lhs}`")));
            }
        }
        let n = entries
            .iter()
            .map(|(_, a, b, _)| a.max(b) + 1)
            .max()
            .ok_or(Error::Parse {
                line: 0,
                message: "no omega_ab entries".into(),
            })?;
        let names = coordinate_names(n);
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut comps = vec![vec![None; n]; n];
        for (line, a, b, src) in entries {
            let (i, j) = (a.min(b), a.max(b));
            if comps[i][j].is_some() {
                return Err(Error::Parse {
                    line,
                    message: format!("component omega_{}{} given twice", i + 1, j + 1),
                });
            }
            let e = Expr::parse(&src, &vars).map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse { line, message },
                other => other,
            })?;
            comps[i][j] = Some(Component::new(e, n));
        }
        let mut domain = vec![Axis::unbounded(); n];
        for (line, a, ax) in domains {
            if a >= n {
                return Err(Error::Parse {
                    line,
                    message: format!("domain axis {} exceeds dimension {n}", a + 1),
                });
            }
            domain[a] = ax;
        }
        Ok((ExprMetric { n, comps }, domain))
    }
}

fn parse_pair(idx: &str) -> Option<(usize, usize)> {
    let (a, b) = match idx.split_once('_') {
        Some((a, b)) => (a.parse::<usize>().ok()?, b.parse::<usize>().ok()?),
        None if idx.len() == 2 => (
            idx[..1].parse::<usize>().ok()?,
            idx[1..].parse::<usize>().ok()?,
        ),
        None => return None,
    };
    (a > 0 && b > 0).then(|| (a - 1, b - 1))
}

fn parse_axis(rhs: &str) -> std::result::Result<Axis, String> {
    let parts: Vec<&str> = rhs.split(',').map(str::trim).collect();
    let bound = |s: &str| -> std::result::Result<f64, String> {
        Expr::parse(s, &[])
            .map(|e| e.eval(&[]))
            .or_else(|_| s.parse::<f64>().map_err(|_| format!("bad bound `{s}`")))
    };
    match parts.as_slice() {
        [lo, hi] => Ok(Axis::open(bound(lo)?, bound(hi)?)),
        [lo, hi, "periodic"] => Ok(Axis::periodic(bound(lo)?, bound(hi)?)),
        _ => Err(format!("expected `lo, hi[, periodic]`, got `{rhs}`")),
    }
}

impl MetricField for ExprMetric {
    fn dim(&self) -> usize {
        self.n
    }

    fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i..self.n {
                if let Some(c) = &self.comps[i][j] {
                    let v = c.value.eval(q);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        }
        Ok(m)
    }

    fn analytic_jet(&self, q: &[f64], order: Order) -> Option<Result<MetricJet>> {
        let n = self.n;
        let mut jet = MetricJet::zeros(n, order);
        for i in 0..n {
            for j in i..n {
                let Some(c) = &self.comps[i][j] else { continue };
                let grad: Vec<f64> = if order >= Order::First {
                    c.first.iter().map(|e| e.eval(q)).collect()
                } else {
                    vec![0.0; n]
                };
                let hess: Vec<Vec<f64>> = if order >= Order::Second {
                    c.second
                        .iter()
                        .map(|row| row.iter().map(|e| e.eval(q)).collect())
                        .collect()
                } else {
                    vec![vec![0.0; n]; n]
                };
                let rows: Vec<&[f64]> = hess.iter().map(|r| r.as_slice()).collect();
                jet.set_component(i, j, c.value.eval(q), &grad, &rows);
            }
        }
        Some(Ok(jet))
    }
}

/// Loads an expression chart from a file; jets are analytic.
pub fn chart_from_file(path: impl AsRef<Path>) -> Result<MetricChart> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    chart_from_text(&path.display().to_string(), &text)
}

pub fn chart_from_text(id: &str, text: &str) -> Result<MetricChart> {
    let (metric, domain) = ExprMetric::parse(text)?;
    MetricChart::new(id, domain, JetSource::Analytic, Arc::new(metric))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_ids() {
        for id in [
            "cartesian:2",
            "polar2",
            "sphere2:1",
            "sphere3:2.5",
            "stereo:2:1",
            "circle-deformed:0.1",
            "plane-deformed:0.01:sin-x",
            "plane-deformed:0.01:linear:0,1,-1,0",
            "plane-deformed:0.01:gaussian-bump:0.5",
        ] {
            let c = chart_from_id(id).unwrap_or_else(|e| panic!("{id}: {e}"));
            assert_eq!(c.id(), id);
        }
        for bad in ["cartesian:0", "sphere2:-1", "sphere2", "torus", "circle-deformed:1.5"] {
            assert!(chart_from_id(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn expression_file_matches_builtin_sphere() {
        let text = "# unit sphere\nomega_11 = 1\nomega_22 = sin(q1)^2  # azimuthal\n\
                    domain_1 = 0, pi\ndomain_2 = 0, 2*pi, periodic\n";
        let file = chart_from_text("file", text).unwrap();
        let builtin = chart_from_id("sphere2:1").unwrap();
        assert!(file.domain()[1].periodic);
        let q = [0.9, 1.7];
        let a = file.metric_jet(&q, Order::Second).unwrap();
        let b = builtin.metric_jet(&q, Order::Second).unwrap();
        assert!((a.value - b.value).amax() < 1e-15);
        assert!((&a.first[0] - &b.first[0]).amax() < 1e-14);
        assert!((&a.second[0][0] - &b.second[0][0]).amax() < 1e-14);
    }

    #[test]
    fn expression_file_errors_carry_line_numbers() {
        let e = ExprMetric::parse("omega_11 = 1\nomega_22 = sin(\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = ExprMetric::parse("omega_11 = 1\nfoo = 2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = ExprMetric::parse("omega_12 = 1\nomega_21 = 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(ExprMetric::parse("# nothing\n").is_err());
    }

    #[test]
    fn off_diagonal_entries_are_symmetric() {
        let (m, dom) = ExprMetric::parse("omega_1_1 = 2\nomega_2_2 = 2\nomega_1_2 = q1*q2\n").unwrap();
        assert_eq!(dom.len(), 2);
        let g = m.metric(&[0.5, 2.0]).unwrap();
        assert_eq!(g[(0, 1)], 1.0);
        assert_eq!(g[(1, 0)], 1.0);
    }
}
