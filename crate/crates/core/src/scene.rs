//! Geometry and near-field channel synthesis.
//!
//! Two uniform linear arrays (PanA transmits the probe, PanB reads) and a
//! single-antenna backscatter device sit in a 2-D plane above a horizontal
//! specular reflector `y = reflector_y`. Each channel entry is a line-of-sight
//! term plus one mirror-image path:
//!
//! `h = exp(-j 2 pi d / lambda) / d + g_smc * exp(-j 2 pi d' / lambda) / d'`
//!
//! where `d'` is the distance from the receiver to the source mirrored across
//! the reflector line. No far-field approximation is made.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{frob2, ComplexMatrix};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Panel {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub pan_a_center: Point,
    pub pan_b_center: Point,
    /// PanA antenna count.
    pub m: usize,
    /// PanB antenna count.
    pub n: usize,
    /// Inter-antenna spacing in wavelengths.
    pub d_ant: f64,
    /// Wavelength in metres.
    pub lambda: f64,
    pub bd_position: Point,
    pub reflector_y: f64,
    pub g_smc: f64,
}

impl Scene {
    /// The reference layout: PanA at the origin, PanB 6 m along x, reflector
    /// at y = -4 m, lambda = 0.1 m, half-wavelength spacing, g_SMC = 0.5.
    pub fn reference(m: usize, n: usize, bd_position: Point) -> Self {
        Scene {
            pan_a_center: [0.0, 0.0],
            pan_b_center: [6.0, 0.0],
            m,
            n,
            d_ant: 0.5,
            lambda: 0.1,
            bd_position,
            reflector_y: -4.0,
            g_smc: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidScene("antenna counts must be >= 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidScene(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !(self.d_ant > 0.0 && self.d_ant.is_finite()) {
            return Err(Error::InvalidScene(format!(
                "d_ant must be > 0, got {}",
                self.d_ant
            )));
        }
        if !self.g_smc.is_finite() {
            return Err(Error::InvalidScene("g_smc must be finite".into()));
        }
        if distance(self.pan_a_center, self.pan_b_center) == 0.0 {
            return Err(Error::InvalidScene("panel centres coincide".into()));
        }
        let a = self.antenna_positions(Panel::A);
        let b = self.antenna_positions(Panel::B);
        for p in a.iter().chain(b.iter()) {
            if distance(*p, self.bd_position) < 1e-9 {
                return Err(Error::InvalidScene(format!(
                    "BD at {:?} coincides with an antenna",
                    self.bd_position
                )));
            }
        }
        let lowest = a
            .iter()
            .chain(b.iter())
            .map(|p| p[1])
            .chain(std::iter::once(self.bd_position[1]))
            .fold(f64::INFINITY, f64::min);
        if !(self.reflector_y < lowest) {
            return Err(Error::InvalidScene(format!(
                "reflector y = {} must lie strictly below every antenna and the BD (lowest y = {lowest})",
                self.reflector_y
            )));
        }
        Ok(())
    }

    /// Antenna positions of a panel, centred on the panel centre and spaced
    /// `d_ant * lambda` apart along the axis perpendicular to the PanA -> PanB
    /// line, in increasing coordinate order.
    pub fn antenna_positions(&self, panel: Panel) -> Vec<Point> {
        let (center, count) = match panel {
            Panel::A => (self.pan_a_center, self.m),
            Panel::B => (self.pan_b_center, self.n),
        };
        let dx = self.pan_b_center[0] - self.pan_a_center[0];
        let dy = self.pan_b_center[1] - self.pan_a_center[1];
        let len = dx.hypot(dy);
        // Perpendicular with non-negative y so that indices increase along +y
        // in the reference layout.
        let (mut px, mut py) = (-dy / len, dx / len);
        if py < 0.0 || (py == 0.0 && px < 0.0) {
            px = -px;
            py = -py;
        }
        let spacing = self.d_ant * self.lambda;
        let mid = (count as f64 - 1.0) / 2.0;
        (0..count)
            .map(|i| {
                let off = (i as f64 - mid) * spacing;
                [center[0] + off * px, center[1] + off * py]
            })
            .collect()
    }

    fn path_gain(&self, from: Point, to: Point) -> Complex64 {
        let k = 2.0 * std::f64::consts::PI / self.lambda;
        let d = distance(from, to);
        let image = [from[0], 2.0 * self.reflector_y - from[1]];
        let d_smc = distance(image, to);
        Complex64::from_polar(1.0 / d, -k * d)
            + Complex64::from_polar(self.g_smc / d_smc, -k * d_smc)
    }
}

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Length of the specular path from `a` to `b` via the line `y = reflector_y`.
pub fn image_path_length(a: Point, b: Point, reflector_y: f64) -> f64 {
    distance([a[0], 2.0 * reflector_y - a[1]], b)
}

/// Channels of one scene. The reverse-direction channels are views by
/// reciprocity and are never stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// PanA -> PanB, N x M.
    pub g_ab: ComplexMatrix,
    /// PanA -> BD, M x 1.
    pub g_ac: ComplexMatrix,
    /// BD -> PanB, N x 1.
    pub g_cb: ComplexMatrix,
}

impl ChannelSet {
    pub fn new(g_ab: ComplexMatrix, g_ac: ComplexMatrix, g_cb: ComplexMatrix) -> Result<Self> {
        let (n, m) = g_ab.shape();
        if g_ac.shape() != (m, 1) {
            return Err(Error::dims("ChannelSet g_ac", (m, 1), g_ac.shape()));
        }
        if g_cb.shape() != (n, 1) {
            return Err(Error::dims("ChannelSet g_cb", (n, 1), g_cb.shape()));
        }
        Ok(ChannelSet { g_ab, g_ac, g_cb })
    }

    pub fn m(&self) -> usize {
        self.g_ab.ncols()
    }

    pub fn n(&self) -> usize {
        self.g_ab.nrows()
    }

    /// PanB -> PanA channel, `G_AB^T`.
    pub fn g_ba(&self) -> ComplexMatrix {
        self.g_ab.transpose()
    }

    pub fn g_ca(&self) -> &ComplexMatrix {
        &self.g_ac
    }

    pub fn g_bc(&self) -> &ComplexMatrix {
        &self.g_cb
    }

    /// Backscatter cascade `g_CB g_AC^T`, N x M.
    pub fn cascade(&self) -> ComplexMatrix {
        &self.g_cb * self.g_ac.transpose()
    }
}

pub fn synthesize_channels(scene: &Scene) -> Result<ChannelSet> {
    scene.validate()?;
    let a = scene.antenna_positions(Panel::A);
    let b = scene.antenna_positions(Panel::B);
    let bd = scene.bd_position;
    let g_ab = ComplexMatrix::from_fn(scene.n, scene.m, |n, m| scene.path_gain(a[m], b[n]));
    let g_ac = ComplexMatrix::from_fn(scene.m, 1, |m, _| scene.path_gain(a[m], bd));
    let g_cb = ComplexMatrix::from_fn(scene.n, 1, |n, _| scene.path_gain(bd, b[n]));
    ChannelSet::new(g_ab, g_ac, g_cb)
}

/// Far-field ULA steering vector, entry `m` = `exp(j m 2 pi d_ant sin(theta))`.
pub fn steering_vector(theta: f64, m: usize, d_ant: f64) -> ComplexMatrix {
    let step = 2.0 * std::f64::consts::PI * d_ant * theta.sin();
    ComplexMatrix::from_fn(m, 1, |i, _| Complex64::from_polar(1.0, i as f64 * step))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanPathGains {
    /// `||G_AB||^2 / (M N)`
    pub ba: f64,
    /// `||g_AC||^2 / M`
    pub ac: f64,
    /// `||g_CB||^2 / N`
    pub cb: f64,
}

pub fn mean_path_gains(ch: &ChannelSet) -> MeanPathGains {
    let (n, m) = (ch.n() as f64, ch.m() as f64);
    MeanPathGains {
        ba: frob2(&ch.g_ab) / (m * n),
        ac: frob2(&ch.g_ac) / m,
        cb: frob2(&ch.g_cb) / n,
    }
}

/// Rescales `g_AC` and `g_CB` by positive reals so both mean gains are 1.
pub fn normalize_backscatter(ch: &ChannelSet) -> Result<ChannelSet> {
    let gains = mean_path_gains(ch);
    if !(gains.ac > 0.0) || !(gains.cb > 0.0) {
        return Err(Error::InvalidInput(
            "cannot normalise a zero backscatter channel".into(),
        ));
    }
    Ok(ChannelSet {
        g_ab: ch.g_ab.clone(),
        g_ac: ch.g_ac.scale(1.0 / gains.ac.sqrt()),
        g_cb: ch.g_cb.scale(1.0 / gains.cb.sqrt()),
    })
}
