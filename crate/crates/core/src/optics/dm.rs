//! Deformable mirror geometry and influence functions.

use crate::error::{invalid, Result};
use crate::geometry::{Affine2, MisRegistration, Point};

/// Relative amplitude below which an influence function is treated as zero.
pub const INFLUENCE_CUTOFF: f64 = 1e-6;

/// Extra radius (pitch units) beyond the pupil edge within which an actuator is active.
pub const ACTIVE_MARGIN: f64 = 0.75;

/// Super-Gaussian influence function parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfluenceParams {
    /// Peak deflection for a unit command, micrometres.
    pub amplitude_um: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for InfluenceParams {
    fn default() -> Self {
        Self {
            amplitude_um: 9.0,
            alpha: 0.87,
            beta: 1.31,
        }
    }
}

impl InfluenceParams {
    pub fn validate(&self) -> Result<()> {
        if self.amplitude_um > 0.0 && self.alpha > 0.0 && self.beta > 0.0 {
            Ok(())
        } else {
            Err(invalid(format!(
                "influence parameters must be positive: {self:?}"
            )))
        }
    }

    /// Radius beyond which the profile drops under [`INFLUENCE_CUTOFF`] of its peak.
    pub fn support_radius(&self) -> f64 {
        ((1.0 / INFLUENCE_CUTOFF).ln() / self.alpha).powf(1.0 / self.beta)
    }
}

/// `A·exp(-α·r^β)`, with `r` in actuator pitches.
pub fn influence_function(r: f64, amplitude: f64, alpha: f64, beta: f64) -> f64 {
    if r == 0.0 {
        return amplitude;
    }
    amplitude * (-alpha * r.powf(beta)).exp()
}

/// Actuator grid in Fried geometry: nodes on the subaperture corners.
#[derive(Clone, Debug, PartialEq)]
pub struct DmModel {
    d_act: usize,
    pitch_m: f64,
    nodes: Vec<(usize, usize)>,
    nominal: Vec<Point>,
    positions: Vec<Point>,
    params: Vec<InfluenceParams>,
    support: Vec<f64>,
    ref_amplitude: f64,
    misreg: MisRegistration,
    inverse: Affine2,
}

impl DmModel {
    /// `(d_sub + 1)²` node grid; nodes within `d_sub/2 + ACTIVE_MARGIN` of the centre are active.
    pub fn fried(d_sub: usize, pitch_m: f64, params: InfluenceParams) -> Result<Self> {
        params.validate()?;
        if d_sub < 2 || !(pitch_m > 0.0) {
            return Err(invalid("DM needs d_sub >= 2 and a positive pitch"));
        }
        let d_act = d_sub + 1;
        let half = d_sub as f64 / 2.0;
        let limit = half + ACTIVE_MARGIN;
        let mut nodes = Vec::new();
        let mut nominal = Vec::new();
        for r in 0..d_act {
            for c in 0..d_act {
                let p = [c as f64 - half, r as f64 - half];
                if p[0].hypot(p[1]) <= limit {
                    nodes.push((r, c));
                    nominal.push(p);
                }
            }
        }
        let n = nodes.len();
        Ok(Self {
            d_act,
            pitch_m,
            nodes,
            positions: nominal.clone(),
            nominal,
            params: vec![params; n],
            support: vec![params.support_radius(); n],
            ref_amplitude: params.amplitude_um,
            misreg: MisRegistration::IDENTITY,
            inverse: Affine2::IDENTITY,
        })
    }

    /// Replaces the per-actuator influence parameters.
    pub fn with_params(mut self, params: Vec<InfluenceParams>) -> Result<Self> {
        if params.len() != self.n_act() {
            return Err(invalid(format!(
                "expected {} parameter sets, got {}",
                self.n_act(),
                params.len()
            )));
        }
        for p in &params {
            p.validate()?;
        }
        self.support = params.iter().map(|p| p.support_radius()).collect();
        let mut a: Vec<f64> = params.iter().map(|p| p.amplitude_um).collect();
        a.sort_by(f64::total_cmp);
        self.ref_amplitude = a[a.len() / 2];
        self.params = params;
        Ok(self)
    }

    /// Same mirror as seen through `m`: positions and influence shapes both mapped.
    pub fn registered(&self, m: &MisRegistration) -> Self {
        Self {
            positions: self.nominal.iter().map(|&p| m.apply(p)).collect(),
            misreg: *m,
            inverse: m.inverse(),
            ..self.clone()
        }
    }

    pub fn d_act(&self) -> usize {
        self.d_act
    }

    pub fn n_act(&self) -> usize {
        self.nodes.len()
    }

    pub fn pitch_m(&self) -> f64 {
        self.pitch_m
    }

    /// Grid node `(row, col)` of each active actuator.
    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.nodes
    }

    pub fn nominal_positions(&self) -> &[Point] {
        &self.nominal
    }

    /// Positions after mis-registration, pitch units.
    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn params(&self) -> &[InfluenceParams] {
        &self.params
    }

    pub fn misregistration(&self) -> &MisRegistration {
        &self.misreg
    }

    /// Median peak amplitude across actuators.
    pub fn reference_amplitude(&self) -> f64 {
        self.ref_amplitude
    }

    /// True when every actuator shares one parameter set.
    pub fn uniform_params(&self) -> bool {
        self.params.iter().all(|p| *p == self.params[0])
    }

    /// Radius (pitch units, WFS frame) outside which every influence function vanishes.
    pub fn support_radius(&self) -> f64 {
        let local = self.support.iter().copied().fold(0.0, f64::max);
        let m = self.misreg.linear();
        let stretch = (m[0][0].powi(2) + m[0][1].powi(2))
            .sqrt()
            .max((m[1][0].powi(2) + m[1][1].powi(2)).sqrt());
        local * stretch.max(1.0) * std::f64::consts::SQRT_2
    }

    /// Surface of actuator `i` for a unit command at WFS-frame point `p`, in
    /// micrometres, with the peak rescaled so the median actuator peaks at `amplitude_um`.
    pub fn actuator_surface(&self, i: usize, p: Point, amplitude_um: f64) -> f64 {
        let pos = self.positions[i];
        let local = self.inverse.apply_linear([p[0] - pos[0], p[1] - pos[1]]);
        let r = local[0].hypot(local[1]);
        if r > self.support[i] {
            return 0.0;
        }
        let prm = &self.params[i];
        let scale = amplitude_um / self.ref_amplitude;
        influence_function(r, prm.amplitude_um * scale, prm.alpha, prm.beta)
    }

    /// Mirror surface in micrometres for `commands` at `p`.
    pub fn surface(&self, commands: &[f64], p: Point, amplitude_um: f64) -> f64 {
        commands
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| c * self.actuator_surface(i, p, amplitude_um))
            .sum()
    }

    /// Scatters a command vector onto the full node grid (inactive nodes zero).
    pub fn to_grid(&self, commands: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d_act * self.d_act];
        for (&(r, c), &v) in self.nodes.iter().zip(commands) {
            g[r * self.d_act + c] = v;
        }
        g
    }

    /// Gathers active nodes from a full grid.
    pub fn from_grid(&self, grid: &[f64]) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|&(r, c)| grid[r * self.d_act + c])
            .collect()
    }
}
