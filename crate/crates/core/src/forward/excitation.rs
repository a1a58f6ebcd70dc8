use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::mesh::PlateMesh;
use super::ForwardError;

/// Hann-windowed sine burst emitted from the plate center along `e_3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub amplitude: f64,
    pub center_frequency: f64,
    pub cycles: f64,
}

impl Default for ExcitationSpec {
    fn default() -> Self {
        Self {
            amplitude: 0.05,
            center_frequency: 0.5,
            cycles: 1.0,
        }
    }
}

impl ExcitationSpec {
    pub fn validate(&self) -> Result<(), ForwardError> {
        if !(self.amplitude.is_finite() && self.center_frequency > 0.0 && self.cycles > 0.0) {
            return Err(ForwardError::InvalidConfig(format!(
                "excitation {self:?} needs finite amplitude and positive frequency and cycle count"
            )));
        }
        Ok(())
    }

    /// Length of the burst window.
    pub fn duration(&self) -> f64 {
        self.cycles / self.center_frequency
    }

    /// Time signal `w(t) = sin(2π f t) sin²(π t / T)` on `[0, T]`, zero
    /// elsewhere.
    pub fn waveform(&self, t: f64) -> f64 {
        let duration = self.duration();
        if !(0.0..=duration).contains(&t) {
            return 0.0;
        }
        let window = (PI * t / duration).sin().powi(2);
        self.amplitude * window * (2.0 * PI * self.center_frequency * t).sin()
    }
}

/// Body force `f(t, x) = A w(t) φ_center(x2, x3) e_3`.
pub fn excitation_signal(t: f64, x: [f64; 3], spec: &ExcitationSpec, mesh: &PlateMesh) -> Vector3<f64> {
    let (i, j) = mesh.center_surface_knot();
    let phi = mesh.surface_basis(i, j, x[1], x[2]);
    Vector3::new(0.0, 0.0, spec.waveform(t) * phi)
}
