//! Pointwise curvature: Christoffel symbols, Riemann and Ricci tensors, scalar curvature.
//!
//! Sign conventions: `R^a_bcd = ∂_c Γ^a_db − ∂_d Γ^a_cb + Γ^a_ce Γ^e_db − Γ^a_de Γ^e_cb`,
//! so that `[∇_c, ∇_d] V^a = R^a_bcd V^b`, which is the same tensor the 1-form
//! commutator `[∇_a, ∇_b] f_c = R^d_abc f_d` defines after relabeling. Ricci is
//! `R_bd = R^a_bad` and the unit 2-sphere has scalar curvature `+2`.

use nalgebra::DMatrix;

use crate::chart::{MetricChart, MetricJet, Order};
use crate::error::Result;
use crate::tensor::{Tensor3, Tensor4};

/// Curvature data at one point of a chart.
#[derive(Debug, Clone)]
pub struct GeometryJet {
    pub point: Vec<f64>,
    pub metric: DMatrix<f64>,
    pub inverse_metric: DMatrix<f64>,
    pub det: f64,
    /// `Γ^a_bc` stored at `(a, b, c)`.
    pub christoffel: Tensor3,
    /// `R^a_bcd` stored at `(a, b, c, d)`.
    pub riemann: Tensor4,
    pub ricci: DMatrix<f64>,
    pub scalar_curvature: f64,
}

impl GeometryJet {
    /// Fully covariant `R_abcd = ω_ae R^e_bcd`.
    pub fn riemann_lowered(&self) -> Tensor4 {
        let n = self.metric.nrows();
        let mut out = Tensor4::zeros(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        out[(a, b, c, d)] =
                            (0..n).map(|e| self.metric[(a, e)] * self.riemann[(e, b, c, d)]).sum();
                    }
                }
            }
        }
        out
    }
}

pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| m.clone().try_inverse().expect("metric is invertible"))
}

/// `Γ^a_bc` from a jet of order ≥ 1.
pub fn christoffel(jet: &MetricJet, inv: &DMatrix<f64>) -> Tensor3 {
    let n = jet.dim();
    let mut g = Tensor3::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for c in b..n {
                let mut s = 0.0;
                for d in 0..n {
                    s += inv[(a, d)]
                        * (jet.first[b][(d, c)] + jet.first[c][(d, b)] - jet.first[d][(b, c)]);
                }
                g[(a, b, c)] = 0.5 * s;
                g[(a, c, b)] = 0.5 * s;
            }
        }
    }
    g
}

/// `∂_e Γ^a_bc` stored at `(e, a, b, c)`, from a jet of order 2.
pub fn christoffel_derivatives(jet: &MetricJet, inv: &DMatrix<f64>) -> Tensor4 {
    let n = jet.dim();
    // ∂_e ω^{ad} = −ω^{af} ∂_e ω_fg ω^{gd}
    let dinv: Vec<DMatrix<f64>> = (0..n).map(|e| -(inv * &jet.first[e] * inv)).collect();
    let mut out = Tensor4::zeros(n);
    for e in 0..n {
        for a in 0..n {
            for b in 0..n {
                for c in b..n {
                    let mut s = 0.0;
                    for d in 0..n {
                        let lower =
                            jet.first[b][(d, c)] + jet.first[c][(d, b)] - jet.first[d][(b, c)];
                        let dlower = jet.second[e][b][(d, c)] + jet.second[e][c][(d, b)]
                            - jet.second[e][d][(b, c)];
                        s += dinv[e][(a, d)] * lower + inv[(a, d)] * dlower;
                    }
                    out[(e, a, b, c)] = 0.5 * s;
                    out[(e, a, c, b)] = 0.5 * s;
                }
            }
        }
    }
    out
}

/// Curvature at `q`.
pub fn geometry_jet(chart: &MetricChart, q: &[f64]) -> Result<GeometryJet> {
    let jet = chart.metric_jet(q, Order::Second)?;
    Ok(geometry_from_jet(q, &jet))
}

pub fn geometry_from_jet(q: &[f64], jet: &MetricJet) -> GeometryJet {
    let n = jet.dim();
    let inv = inverse(&jet.value);
    let gamma = christoffel(jet, &inv);
    let dgamma = christoffel_derivatives(jet, &inv);

    let mut riemann = Tensor4::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in (c + 1)..n {
                    let mut v = dgamma[(c, a, d, b)] - dgamma[(d, a, c, b)];
                    for e in 0..n {
                        v += gamma[(a, c, e)] * gamma[(e, d, b)] - gamma[(a, d, e)] * gamma[(e, c, b)];
                    }
                    riemann[(a, b, c, d)] = v;
                    riemann[(a, b, d, c)] = -v;
                }
            }
        }
    }

    let mut ricci = DMatrix::<f64>::zeros(n, n);
    for b in 0..n {
        for d in 0..n {
            ricci[(b, d)] = (0..n).map(|a| riemann[(a, b, a, d)]).sum();
        }
    }
    // Symmetric in exact arithmetic; remove rounding asymmetry.
    let ricci = 0.5 * (&ricci + ricci.transpose());
    let scalar_curvature: f64 = inv.component_mul(&ricci).sum();

    GeometryJet {
        point: q.to_vec(),
        det: jet.value.determinant(),
        metric: jet.value.clone(),
        inverse_metric: inv,
        christoffel: gamma,
        riemann,
        ricci,
        scalar_curvature,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{chart_from_id, chart_from_text};
    use crate::chart::JetSource;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn flat_charts_have_zero_curvature() {
        let g = geometry_jet(&chart_from_id("cartesian:2").unwrap(), &[1.0, 2.0]).unwrap();
        assert_eq!(g.christoffel.max_abs(), 0.0);
        assert_eq!(g.riemann.max_abs(), 0.0);
        assert_eq!(g.scalar_curvature, 0.0);

        let g = geometry_jet(&chart_from_id("polar2").unwrap(), &[1.3, 0.2]).unwrap();
        assert!((g.christoffel[(0, 1, 1)] + 1.3).abs() < 1e-14);
        assert!((g.christoffel[(1, 0, 1)] - 1.0 / 1.3).abs() < 1e-14);
        assert!(g.riemann.max_abs() < 1e-14);
    }

    #[test]
    fn constant_metric_has_no_connection() {
        let c = chart_from_text("const", "omega_11 = 2\nomega_22 = 3\nomega_12 = 0.5\n").unwrap();
        let g = geometry_jet(&c, &[0.1, 0.2]).unwrap();
        assert_eq!(g.christoffel.max_abs(), 0.0);
        assert_eq!(g.scalar_curvature, 0.0);
    }

    #[test]
    fn unit_sphere_normalization() {
        let c = chart_from_id("sphere2:1").unwrap();
        for t in [0.3, 1.0, FRAC_PI_2, 2.5] {
            let g = geometry_jet(&c, &[t, 0.7]).unwrap();
            assert!((g.scalar_curvature - 2.0).abs() < 1e-12, "θ={t}: {}", g.scalar_curvature);
            // R_θφθφ = sin²θ
            let low = g.riemann_lowered();
            assert!((low[(0, 1, 0, 1)] - t.sin().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn three_sphere_scalar_curvature() {
        let a = 1.7;
        let c = chart_from_id(&format!("sphere3:{a}")).unwrap();
        let g = geometry_jet(&c, &[1.1, 0.8, 0.3]).unwrap();
        assert!((g.scalar_curvature - 6.0 / (a * a)).abs() < 1e-12);
        let g = geometry_jet(&chart_from_id("stereo:3:1").unwrap(), &[0.2, -0.4, 0.1]).unwrap();
        assert!((g.scalar_curvature - 6.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_jets_reproduce_curvature() {
        let c = chart_from_id("sphere2:1").unwrap().with_source(JetSource::Numeric);
        let g = geometry_jet(&c, &[1.0, 0.5]).unwrap();
        assert!((g.scalar_curvature - 2.0).abs() < 1e-6);
    }

    #[test]
    fn structural_identities() {
        let g = geometry_jet(&chart_from_id("sphere3:1").unwrap(), &[0.9, 1.2, 0.0]).unwrap();
        let n = 3;
        let id = &g.inverse_metric * &g.metric - DMatrix::identity(n, n);
        assert!(id.amax() < 1e-12);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    assert_eq!(g.christoffel[(a, b, c)], g.christoffel[(a, c, b)]);
                    for d in 0..n {
                        assert_eq!(g.riemann[(a, b, c, d)], -g.riemann[(a, b, d, c)]);
                    }
                }
            }
        }
        assert!((&g.ricci - g.ricci.transpose()).amax() == 0.0);
    }
}
