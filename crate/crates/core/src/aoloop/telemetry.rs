use crate::config::LoopConfig;
use crate::error::{invalid, Result};
use crate::geometry::MisRegistration;

/// Recorded DM commands on the full `d_act × d_act` node grid, one frame per
/// loop step. Inactive nodes hold zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TelemetryCube {
    pub n_frames: usize,
    pub d_act: usize,
    /// Loop period, seconds.
    pub dt: f64,
    pub clip: f64,
    /// Row-major `[frame][row][col]`.
    pub frames: Vec<f64>,
    pub loop_config: Option<LoopConfig>,
    pub true_misreg: Option<MisRegistration>,
}

impl TelemetryCube {
    pub fn new(d_act: usize, dt: f64, clip: f64) -> Self {
        Self {
            n_frames: 0,
            d_act,
            dt,
            clip,
            frames: Vec::new(),
            loop_config: None,
            true_misreg: None,
        }
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.d_act * self.d_act;
        &self.frames[i * n..(i + 1) * n]
    }

    pub fn push_frame(&mut self, grid: &[f64]) {
        debug_assert_eq!(grid.len(), self.d_act * self.d_act);
        self.frames.extend_from_slice(grid);
        self.n_frames += 1;
    }

    /// Checks the cube holds at least two finite frames within the clip bound.
    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 2 {
            return Err(invalid(format!(
                "telemetry needs at least 2 frames, got {}",
                self.n_frames
            )));
        }
        if self.frames.len() != self.n_frames * self.d_act * self.d_act {
            return Err(invalid("telemetry size does not match its shape"));
        }
        if let Some(v) = self
            .frames
            .iter()
            .find(|v| !v.is_finite() || v.abs() > self.clip)
        {
            return Err(invalid(format!(
                "telemetry value {v} is non-finite or beyond the clip bound"
            )));
        }
        Ok(())
    }

    /// Frames `start..start + len` as a new cube.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let n = self.d_act * self.d_act;
        Self {
            n_frames: len,
            frames: self.frames[start * n..(start + len) * n].to_vec(),
            ..self.clone()
        }
    }
}
