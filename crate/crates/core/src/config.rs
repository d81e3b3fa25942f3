//! Loop timing/gain configuration and the plain-text simulation config file.

use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Gains and characteristic times of the AO loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopConfig {
    pub tau_wfs: f64,
    pub tau_lat: f64,
    pub tau_dm: f64,
    pub tau_rtc: f64,
    pub g_int: f64,
    pub g_leak: f64,
    pub n_mod: usize,
    pub clip: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self::with_period(1e-3)
    }
}

impl LoopConfig {
    /// All characteristic times equal to `tau`, gain 0.5, no leak, 500 modes.
    pub fn with_period(tau: f64) -> Self {
        Self {
            tau_wfs: tau,
            tau_lat: tau,
            tau_dm: tau,
            tau_rtc: tau,
            g_int: 0.5,
            g_leak: 0.0,
            n_mod: 500,
            clip: 1.0,
        }
    }

    pub fn validate(&self, n_act: usize) -> Result<()> {
        for (name, tau) in [
            ("tau_wfs", self.tau_wfs),
            ("tau_lat", self.tau_lat),
            ("tau_dm", self.tau_dm),
            ("tau_rtc", self.tau_rtc),
        ] {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {tau}")));
            }
        }
        if !(self.g_int > 0.0 && self.g_int <= 1.0) {
            return Err(invalid(format!(
                "g_int must be in (0, 1], got {}",
                self.g_int
            )));
        }
        if !(self.g_leak >= 0.0 && self.g_leak < 1.0) {
            return Err(invalid(format!(
                "g_leak must be in [0, 1), got {}",
                self.g_leak
            )));
        }
        if self.n_mod < 1 || self.n_mod > n_act {
            return Err(invalid(format!(
                "n_mod must be in [1, {n_act}], got {}",
                self.n_mod
            )));
        }
        if !(self.clip > 0.0) {
            return Err(invalid(format!("clip must be positive, got {}", self.clip)));
        }
        Ok(())
    }

    /// Frames between a WFS exposure and the first frame its correction is
    /// applied: one for read-out plus the latency rounded to whole frames.
    pub fn delay_frames(&self) -> usize {
        1 + (self.tau_lat / self.tau_rtc).round() as usize
    }

    /// Loop rate in Hz.
    pub fn rate_hz(&self) -> f64 {
        1.0 / self.tau_rtc
    }
}

fn parse_value<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        message: format!("bad value `{value}` for `{key}`"),
    })
}

/// Contents of a `key = value` simulation config file.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub d_sub: usize,
    pub obscuration: f64,
    pub pitch_m: f64,
    pub tau_s: f64,
    pub g_int: f64,
    pub g_leak: f64,
    pub n_mod: usize,
    pub clip: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            d_sub: 40,
            obscuration: 0.14,
            pitch_m: 0.2,
            tau_s: 1e-3,
            g_int: 0.5,
            g_leak: 0.0,
            n_mod: 500,
            clip: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Parses config text. Missing keys keep their defaults; unknown keys,
    /// duplicate keys and malformed values are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            match key {
                "d_sub" => cfg.d_sub = parse_value(value, key, line_no)?,
                "obscuration" => cfg.obscuration = parse_value(value, key, line_no)?,
                "pitch_m" => cfg.pitch_m = parse_value(value, key, line_no)?,
                "tau_s" => cfg.tau_s = parse_value(value, key, line_no)?,
                "g_int" => cfg.g_int = parse_value(value, key, line_no)?,
                "g_leak" => cfg.g_leak = parse_value(value, key, line_no)?,
                "n_mod" => cfg.n_mod = parse_value(value, key, line_no)?,
                "clip" => cfg.clip = parse_value(value, key, line_no)?,
                "seed" => cfg.seed = parse_value(value, key, line_no)?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
            seen.push(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_sub < 4 {
            return Err(invalid(format!(
                "d_sub must be at least 4, got {}",
                self.d_sub
            )));
        }
        if !(0.0..1.0).contains(&self.obscuration) {
            return Err(invalid(format!(
                "obscuration must be in [0, 1), got {}",
                self.obscuration
            )));
        }
        if !(self.pitch_m > 0.0) {
            return Err(invalid(format!(
                "pitch_m must be positive, got {}",
                self.pitch_m
            )));
        }
        let lc = self.loop_config();
        // n_act is only known once the DM is built; bound by the full grid here.
        lc.validate((self.d_sub + 1) * (self.d_sub + 1))
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            g_int: self.g_int,
            g_leak: self.g_leak,
            n_mod: self.n_mod,
            clip: self.clip,
            ..LoopConfig::with_period(self.tau_s)
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "d_sub = {}\nobscuration = {}\npitch_m = {}\ntau_s = {}\ng_int = {}\ng_leak = {}\nn_mod = {}\nclip = {}\nseed = {}\n",
            self.d_sub,
            self.obscuration,
            self.pitch_m,
            self.tau_s,
            self.g_int,
            self.g_leak,
            self.n_mod,
            self.clip,
            self.seed
        )
    }
}
