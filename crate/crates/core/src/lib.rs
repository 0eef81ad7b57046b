//! Quantization of natural Hamiltonian systems on Riemannian configuration spaces.
//!
//! The crate computes curvature of a metric given in a coordinate chart, the
//! DeWitt-ordered quantum Hamiltonian and its coordinate-dependent
//! quantum-mechanical potential (QMP), the one-parameter family of Hermitian
//! orderings, normal-coordinate asymptotics, QMP induced by deformed Cartesian
//! coordinates, chart-dependent spectra, and the quasi-classical Van Vleck
//! potential.
//!
//! Module map:
//!
//! - [`chart`], [`catalog`], [`geometry`]: charts, derivative jets, curvature.
//! - [`quantization`]: momentum operator, Laplace–Beltrami operator, QMP, orderings.
//! - [`normal`]: geodesics, exponential map, normal Riemannian coordinates.
//! - [`deformation`]: small deformations of Cartesian coordinates.
//! - [`spectral`]: discretized Hamiltonians and their eigenvalues.
//! - [`quasiclassical`]: classical action, Van Vleck determinant, two-point QMP.

pub mod catalog;
pub mod chart;
pub mod deformation;
pub mod error;
pub mod expr;
pub mod fd;
pub mod geometry;
pub mod grid;
pub mod normal;
pub mod quantization;
pub mod quasiclassical;
pub mod spectral;
pub mod tensor;

pub use catalog::{chart_from_file, chart_from_id, chart_from_text, resolve_chart};
pub use chart::{Axis, JetSource, MetricChart, MetricField, MetricJet, Order};
pub use error::{Error, Result};
pub use geometry::{geometry_jet, GeometryJet};

/// Physical constants; natural units by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

impl Constants {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite() && mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "constants must be positive: hbar={hbar}, mass={mass}"
            )));
        }
        Ok(Self { hbar, mass })
    }

    /// `ħ²/2m`, the kinetic prefactor.
    pub fn kinetic(&self) -> f64 {
        self.hbar * self.hbar / (2.0 * self.mass)
    }
}
