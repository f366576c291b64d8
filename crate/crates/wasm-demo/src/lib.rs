use std::f64::consts::TAU;

use qvdp::harness::single_steady_state;
use qvdp::hilbert::SpaceLayout;
use qvdp::lindblad::{self, EffectiveParams};
use qvdp::meanfield;
use qvdp::syncmetrics;
use qvdp::tomography::{self, Grid2D, ReadoutSettings};
use wasm_bindgen::prelude::*;

/// A square grid handed to JS: row-major values plus the axis extent.
#[wasm_bindgen]
pub struct Image {
    values: Vec<f64>,
    size: usize,
    half_width: f64,
    /// Scalar summary (mean photon number or mutual information).
    pub summary: f64,
}

#[wasm_bindgen]
impl Image {
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }
}

fn err(e: qvdp::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Crops the zero-padded reconstruction to |coord| ≤ half.
fn crop(g: &Grid2D, half: f64) -> (Vec<f64>, usize, f64) {
    let keep: Vec<usize> = (0..g.axis1.points)
        .filter(|&k| g.axis1.coord(k).abs() <= half)
        .collect();
    let mut out = Vec::with_capacity(keep.len() * keep.len());
    for &j in keep.iter().rev() {
        for &i in &keep {
            out.push(g.values[[i, j]]);
        }
    }
    let h = g.axis1.coord(keep[keep.len() - 1]);
    (out, keep.len(), h)
}

/// Steady-state Wigner function of one oscillator at κ₋/κ₊ = `ratio`.
#[wasm_bindgen]
pub fn single_vdp_wigner(ratio: f64, cutoff: usize) -> Result<Image, JsError> {
    let p = EffectiveParams::single(TAU * 120.0, ratio);
    let st = single_steady_state(&p, cutoff).map_err(err)?;
    let w = tomography::wigner(&st, &ReadoutSettings::exact(), 0)
        .map_err(err)?
        .value;
    let (values, size, half_width) = crop(&w, 4.0);
    Ok(Image {
        values,
        size,
        half_width,
        summary: st.mean_number(0).map_err(err)?,
    })
}

/// Reconstructed P(x₁, x₂) of the coupled steady state at phase `phi`, coupling `v_hz` (V/2π).
#[wasm_bindgen]
pub fn joint_quadratures(phi: f64, v_hz: f64, cutoff: usize) -> Result<Image, JsError> {
    let p = EffectiveParams {
        phi,
        coupling: TAU * v_hz,
        ..EffectiveParams::quantum()
    };
    let layout = SpaceLayout::two_modes(cutoff, cutoff).map_err(err)?;
    let st = lindblad::steady_state_direct(&lindblad::vdp_generator(&p, &layout).map_err(err)?)
        .map_err(err)?;
    let g = tomography::joint_distribution(&st, &ReadoutSettings::exact(), 0)
        .map_err(err)?
        .value;
    let mi = syncmetrics::mutual_information_2d(&g).map_err(err)?;
    let (values, size, half_width) = crop(&g, 4.0);
    Ok(Image {
        values,
        size,
        half_width,
        summary: mi,
    })
}

/// Mean-field orbit (x₁, x₂) interleaved, for the classical rates with V/κ₊ = `v_ratio`.
#[wasm_bindgen]
pub fn lissajous(phi: f64, v_ratio: f64) -> Result<Vec<f64>, JsError> {
    let base = EffectiveParams::classical();
    let p = EffectiveParams {
        coupling: v_ratio * base.kappa_plus,
        ..base
    };
    let c = meanfield::lissajous(&p, &[phi], 256).map_err(err)?;
    Ok(c[0]
        .x1
        .iter()
        .zip(&c[0].x2)
        .flat_map(|(a, b)| [*a, *b])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wigner_image_is_square() {
        let img = single_vdp_wigner(0.3, 20).ok().unwrap();
        assert_eq!(img.values().len(), img.size() * img.size());
        assert!(img.half_width() <= 4.0 && img.summary > 0.0);
    }

    #[test]
    fn joint_mi_grows_with_coupling() {
        let weak = joint_quadratures(0.0, 0.0, 6).ok().unwrap().summary;
        let strong = joint_quadratures(0.0, 200.0, 6).ok().unwrap().summary;
        assert!(weak < 1e-6 && strong > weak);
    }

    #[test]
    fn orbit_interleaves_pairs() {
        assert_eq!(lissajous(1.0, 0.8).ok().unwrap().len(), 512);
    }
}
