//! Coordinate charts carrying a Riemannian metric, and their derivative jets.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fd;

/// One coordinate axis of a chart domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
}

impl Axis {
    pub fn open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            periodic: false,
        }
    }

    pub fn unbounded() -> Self {
        Self::open(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn periodic(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            periodic: true,
        }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Shortest signed coordinate difference `to - from`, wrapping on periodic axes.
    pub fn difference(&self, from: f64, to: f64) -> f64 {
        let d = to - from;
        if self.periodic {
            let l = self.length();
            d - l * (d / l).round()
        } else {
            d
        }
    }
}

/// Which derivatives a jet carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    First,
    Second,
}

/// How a chart produces metric partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetSource {
    /// Closed-form partials supplied by the metric field.
    Analytic,
    /// Central differences with Richardson extrapolation.
    Numeric,
}

/// Metric components with partial derivatives at one point.
///
/// `first[c]` holds `∂_c ω_ab`, `second[c][d]` holds `∂_c ∂_d ω_ab`.
/// Entries beyond the requested order are left empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricJet {
    pub value: DMatrix<f64>,
    pub first: Vec<DMatrix<f64>>,
    pub second: Vec<Vec<DMatrix<f64>>>,
}

impl MetricJet {
    pub fn zeros(n: usize, order: Order) -> Self {
        let first = if order >= Order::First {
            vec![DMatrix::zeros(n, n); n]
        } else {
            Vec::new()
        };
        let second = if order >= Order::Second {
            vec![vec![DMatrix::zeros(n, n); n]; n]
        } else {
            Vec::new()
        };
        Self {
            value: DMatrix::zeros(n, n),
            first,
            second,
        }
    }

    pub fn dim(&self) -> usize {
        self.value.nrows()
    }

    pub fn order(&self) -> Order {
        if !self.second.is_empty() {
            Order::Second
        } else if !self.first.is_empty() {
            Order::First
        } else {
            Order::Value
        }
    }

    /// Sets the symmetric pair `(a, b)`, `(b, a)` of every carried derivative
    /// from a scalar component function: value, gradient, Hessian.
    pub fn set_component(&mut self, a: usize, b: usize, v: f64, grad: &[f64], hess: &[&[f64]]) {
        let n = self.dim();
        self.value[(a, b)] = v;
        self.value[(b, a)] = v;
        for c in 0..self.first.len() {
            self.first[c][(a, b)] = grad[c];
            self.first[c][(b, a)] = grad[c];
        }
        if !self.second.is_empty() {
            for c in 0..n {
                for d in 0..n {
                    self.second[c][d][(a, b)] = hess[c][d];
                    self.second[c][d][(b, a)] = hess[c][d];
                }
            }
        }
    }
}

/// A metric field `q ↦ ω_ab(q)` in one coordinate chart.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;

    fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>>;

    /// Closed-form jet, if the field provides one.
    fn analytic_jet(&self, _q: &[f64], _order: Order) -> Option<Result<MetricJet>> {
        None
    }
}

/// A chart: domain, metric field and derivative backend. Immutable and cheap to clone.
#[derive(Clone)]
pub struct MetricChart {
    id: String,
    domain: Vec<Axis>,
    source: JetSource,
    field: Arc<dyn MetricField>,
}

impl fmt::Debug for MetricChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricChart")
            .field("id", &self.id)
            .field("domain", &self.domain)
            .field("source", &self.source)
            .finish()
    }
}

impl MetricChart {
    pub fn new(
        id: impl Into<String>,
        domain: Vec<Axis>,
        source: JetSource,
        field: Arc<dyn MetricField>,
    ) -> Result<Self> {
        if domain.len() != field.dim() || domain.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: field.dim(),
                got: domain.len(),
            });
        }
        for ax in &domain {
            if !(ax.lo < ax.hi) || (ax.periodic && !ax.length().is_finite()) {
                return Err(Error::InvalidArgument(format!("bad axis {ax:?}")));
            }
        }
        Ok(Self {
            id: id.into(),
            domain,
            source,
            field,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn domain(&self) -> &[Axis] {
        &self.domain
    }

    pub fn source(&self) -> JetSource {
        self.source
    }

    pub fn field(&self) -> &Arc<dyn MetricField> {
        &self.field
    }

    /// Same chart with a different derivative backend.
    pub fn with_source(&self, source: JetSource) -> Self {
        Self {
            source,
            ..self.clone()
        }
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        self.check_point(q).is_ok()
    }

    pub fn check_point(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.len(),
            });
        }
        for (axis, (x, ax)) in q.iter().zip(&self.domain).enumerate() {
            if !x.is_finite() || (!ax.periodic && !(ax.lo < *x && *x < ax.hi)) {
                return Err(Error::PointOutsideDomain {
                    point: q.to_vec(),
                    axis,
                });
            }
        }
        Ok(())
    }

    /// Coordinate displacement `to - from`, shortest way round on periodic axes.
    pub fn displacement(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        self.domain
            .iter()
            .zip(from.iter().zip(to))
            .map(|(ax, (a, b))| ax.difference(*a, *b))
            .collect()
    }

    /// Metric at `q`, checked for domain membership and positive-definiteness.
    pub fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(q)?;
        let m = self.field.metric(q)?;
        ensure_positive_definite(&m, q)?;
        Ok(m)
    }

    /// Metric components with partials up to `order` at `q`.
    pub fn metric_jet(&self, q: &[f64], order: Order) -> Result<MetricJet> {
        self.check_point(q)?;
        let jet = match self.source {
            JetSource::Analytic => match self.field.analytic_jet(q, order) {
                Some(jet) => jet?,
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "chart `{}` has no analytic jets",
                        self.id
                    )))
                }
            },
            JetSource::Numeric => self.numeric_jet(q, order)?,
        };
        ensure_positive_definite(&jet.value, q)?;
        Ok(jet)
    }

    fn numeric_jet(&self, q: &[f64], order: Order) -> Result<MetricJet> {
        let n = self.dim();
        for (axis, (x, ax)) in q.iter().zip(&self.domain).enumerate() {
            if ax.periodic || order == Order::Value {
                continue;
            }
            let width = if order == Order::Second {
                fd::second_step(*x).max(fd::first_step(*x))
            } else {
                fd::first_step(*x)
            };
            if !(ax.lo < x - width && x + width < ax.hi) {
                return Err(Error::StencilClipsBoundary {
                    point: q.to_vec(),
                    axis,
                    width,
                });
            }
        }
        let f = |p: &[f64]| self.field.metric(p);
        let value = f(q)?;
        let mut jet = MetricJet::zeros(n, order);
        if order >= Order::First {
            for c in 0..n {
                jet.first[c] = fd::first_partial(&f, q, c, fd::first_step(q[c]))?;
            }
        }
        if order >= Order::Second {
            for c in 0..n {
                let hc = fd::second_step(q[c]);
                jet.second[c][c] = fd::second_partial(&f, q, c, hc, &value)?;
                for d in (c + 1)..n {
                    let m = fd::mixed_partial(&f, q, c, d, hc, fd::second_step(q[d]))?;
                    jet.second[d][c] = m.clone();
                    jet.second[c][d] = m;
                }
            }
        }
        jet.value = value;
        Ok(jet)
    }
}

fn ensure_positive_definite(m: &DMatrix<f64>, q: &[f64]) -> Result<()> {
    let symmetric = (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
    if !symmetric || m.iter().any(|v| !v.is_finite()) || m.clone().cholesky().is_none() {
        return Err(Error::NonPositiveDefinite { point: q.to_vec() });
    }
    Ok(())
}
