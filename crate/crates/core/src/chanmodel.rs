//! Deployment geometry and synthetic frequency-selective channels.
//!
//! Each AP-UE link is a tapped delay line: `num_taps` Rayleigh taps with
//! exponentially decaying mean powers and uniform delays, seen through a
//! uniform circular array at the AP, scaled by UMi-style path loss and
//! log-normal shadowing. The response is sampled at every subband centre.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::rng;
use crate::{Error, Result, C64};

const TAG_AP: u64 = 0xA1;
const TAG_UE: u64 = 0xB2;
const TAG_LINK: u64 = 0xC3;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApPlacement {
    /// Cell centres of a `ceil(sqrt(L))` square grid, truncated to L points.
    Grid,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentConfig {
    pub area_side_m: f64,
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_ues: usize,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub rb_hz: f64,
    pub num_subbands: usize,
    pub ap_placement: ApPlacement,
    pub seed: u64,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            area_side_m: 1000.0,
            num_aps: 100,
            antennas_per_ap: 4,
            num_ues: 40,
            ap_height_m: 12.5,
            ue_height_m: 1.5,
            carrier_hz: 5.9e9,
            bandwidth_hz: 50e6,
            rb_hz: 180e3,
            num_subbands: 277,
            ap_placement: ApPlacement::Grid,
            seed: 0,
        }
    }
}

impl DeploymentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        if self.num_aps == 0 {
            return bad("num_aps must be at least 1");
        }
        if self.antennas_per_ap == 0 {
            return bad("antennas_per_ap must be at least 1");
        }
        if self.num_subbands == 0 {
            return bad("num_subbands must be at least 1");
        }
        for (name, v) in [
            ("area_side_m", self.area_side_m),
            ("ap_height_m", self.ap_height_m),
            ("ue_height_m", self.ue_height_m),
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("rb_hz", self.rb_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite")));
            }
        }
        let max_subbands = (self.bandwidth_hz / self.rb_hz).floor() as usize + 1;
        if self.num_subbands > max_subbands {
            return Err(Error::InvalidConfig(format!(
                "num_subbands {} exceeds floor(B / B_RB) + 1 = {max_subbands}",
                self.num_subbands
            )));
        }
        Ok(())
    }

    /// Subband centre frequencies: `S` equal slices of the band around `f_c`.
    pub fn subband_frequencies(&self) -> Vec<f64> {
        let s = self.num_subbands as f64;
        let width = self.bandwidth_hz / s;
        (0..self.num_subbands)
            .map(|i| self.carrier_hz - self.bandwidth_hz / 2.0 + (i as f64 + 0.5) * width)
            .collect()
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub ap_positions: Vec<[f64; 3]>,
    pub ue_positions: Vec<[f64; 3]>,
}

pub fn generate_deployment(config: &DeploymentConfig) -> Result<Deployment> {
    config.validate()?;
    let side = config.area_side_m;
    let l = config.num_aps;
    let ap_positions = match config.ap_placement {
        ApPlacement::Grid => {
            let g = (l as f64).sqrt().ceil() as usize;
            let cell = side / g as f64;
            (0..l)
                .map(|i| {
                    let (row, col) = (i / g, i % g);
                    [(col as f64 + 0.5) * cell, (row as f64 + 0.5) * cell, config.ap_height_m]
                })
                .collect()
        }
        ApPlacement::Uniform => (0..l)
            .map(|i| {
                let mut r = rng::stream(config.seed, &[TAG_AP, i as u64]);
                [r.random::<f64>() * side, r.random::<f64>() * side, config.ap_height_m]
            })
            .collect(),
    };
    // One stream per UE: a deployment with more UEs extends one with fewer.
    let ue_positions = (0..config.num_ues)
        .map(|k| {
            let mut r = rng::stream(config.seed, &[TAG_UE, k as u64]);
            [r.random::<f64>() * side, r.random::<f64>() * side, config.ue_height_m]
        })
        .collect();
    Ok(Deployment { ap_positions, ue_positions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathLossModel {
    /// `32.4 + 21 log10(d_3D) + 20 log10(f_c / 1 GHz)` dB.
    UmiStreetCanyon,
    /// Unit gain; isolates small-scale fading in tests.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayModel {
    /// Uniform circular array with half-wavelength neighbour spacing.
    Uca,
    /// Every antenna sees the same phase.
    Isotropic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FadingParams {
    pub num_taps: usize,
    pub delay_spread_s: f64,
    /// Tap `p` has mean power proportional to `exp(-decay * tau_p / delay_spread)`.
    pub decay_exponent: f64,
    pub shadowing_db: f64,
    pub path_loss: PathLossModel,
    pub array: ArrayModel,
    pub noise_figure_db: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            num_taps: 8,
            delay_spread_s: 300e-9,
            decay_exponent: 3.0,
            shadowing_db: 4.0,
            path_loss: PathLossModel::UmiStreetCanyon,
            array: ArrayModel::Uca,
            noise_figure_db: 7.0,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_taps == 0 {
            return Err(Error::InvalidConfig("num_taps must be at least 1".into()));
        }
        if !(self.delay_spread_s >= 0.0 && self.delay_spread_s.is_finite()) {
            return Err(Error::InvalidConfig("delay_spread_s must be nonnegative".into()));
        }
        if !(self.shadowing_db >= 0.0 && self.shadowing_db.is_finite()) {
            return Err(Error::InvalidConfig("shadowing_db must be nonnegative".into()));
        }
        if !(self.decay_exponent.is_finite() && self.noise_figure_db.is_finite()) {
            return Err(Error::InvalidConfig("fading parameters must be finite".into()));
        }
        Ok(())
    }
}

pub fn path_loss_db(d3d_m: f64, carrier_hz: f64) -> f64 {
    32.4 + 21.0 * d3d_m.log10() + 20.0 * (carrier_hz / 1e9).log10()
}

pub fn noise_power_dbm(config: &DeploymentConfig, fading: &FadingParams) -> f64 {
    -174.0 + 10.0 * config.rb_hz.log10() + fading.noise_figure_db
}

/// Thermal noise power per subband, in watts.
pub fn noise_power(config: &DeploymentConfig, fading: &FadingParams) -> f64 {
    10f64.powf((noise_power_dbm(config, fading) - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub gain: C64,
    pub delay_s: f64,
    pub angle_rad: f64,
}

/// Array response of antenna `n` of `num` for a departure angle.
fn array_phase(array: ArrayModel, n: usize, num: usize, angle: f64, wavelength: f64) -> C64 {
    match array {
        ArrayModel::Isotropic => C64::new(1.0, 0.0),
        ArrayModel::Uca if num < 2 => C64::new(1.0, 0.0),
        ArrayModel::Uca => {
            let radius = wavelength / (4.0 * (PI / num as f64).sin());
            let phi = 2.0 * PI * n as f64 / num as f64;
            C64::from_polar(1.0, 2.0 * PI / wavelength * radius * (angle - phi).cos())
        }
    }
}

/// Per-antenna frequency response of a tap set at one frequency, without
/// large-scale scaling.
pub fn tap_response(taps: &[Tap], freq_hz: f64, antennas: usize, array: ArrayModel, wavelength: f64) -> Vec<C64> {
    (0..antennas)
        .map(|n| {
            taps.iter()
                .map(|t| {
                    t.gain
                        * array_phase(array, n, antennas, t.angle_rad, wavelength)
                        * C64::from_polar(1.0, -2.0 * PI * freq_hz * t.delay_s)
                })
                .sum()
        })
        .collect()
}

fn draw_taps(r: &mut rng::Rng, fading: &FadingParams) -> Vec<Tap> {
    let mut delays: Vec<f64> = (0..fading.num_taps)
        .map(|_| r.random::<f64>() * fading.delay_spread_s)
        .collect();
    delays.sort_by(f64::total_cmp);
    let weights: Vec<f64> = delays
        .iter()
        .map(|&d| {
            if fading.delay_spread_s > 0.0 {
                (-fading.decay_exponent * d / fading.delay_spread_s).exp()
            } else {
                1.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    delays
        .into_iter()
        .zip(weights)
        .map(|(delay_s, w)| {
            let re: f64 = StandardNormal.sample(r);
            let im: f64 = StandardNormal.sample(r);
            let amp = (w / total / 2.0).sqrt();
            Tap {
                gain: C64::new(re * amp, im * amp),
                delay_s,
                angle_rad: r.random::<f64>() * 2.0 * PI,
            }
        })
        .collect()
}

/// Complex channel frequency responses `h[k][l][s]` (each a length-N vector)
/// and the derived large-scale gains. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    num_ues: usize,
    num_aps: usize,
    num_subbands: usize,
    antennas: usize,
    h: Vec<C64>,
    gain: Vec<f64>,
}

impl ChannelTensor {
    /// Builds a tensor from a flat `[k][l][s][n]` buffer.
    pub fn from_raw(num_ues: usize, num_aps: usize, num_subbands: usize, antennas: usize, h: Vec<C64>) -> Result<Self> {
        let expected = num_ues * num_aps * num_subbands * antennas;
        if h.len() != expected {
            return Err(Error::ShapeMismatch { expected, got: h.len() });
        }
        if h.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Format { what: "channel tensor", detail: "non-finite entry".into() });
        }
        let mut t = Self { num_ues, num_aps, num_subbands, antennas, h, gain: Vec::new() };
        t.gain = (0..num_ues)
            .flat_map(|k| (0..num_aps).map(move |l| (k, l)))
            .map(|(k, l)| {
                let sum: f64 = (0..num_subbands).map(|s| norm_sqr(t.link(k, l, s))).sum();
                sum / num_subbands as f64
            })
            .collect();
        Ok(t)
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }
    pub fn num_aps(&self) -> usize {
        self.num_aps
    }
    pub fn num_subbands(&self) -> usize {
        self.num_subbands
    }
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    fn offset(&self, k: usize, l: usize, s: usize) -> usize {
        ((k * self.num_aps + l) * self.num_subbands + s) * self.antennas
    }

    /// The length-N vector `h_{k,l,s}`.
    pub fn link(&self, k: usize, l: usize, s: usize) -> &[C64] {
        let o = self.offset(k, l, s);
        &self.h[o..o + self.antennas]
    }

    /// The aggregate length-NL row `h_{k,s}`.
    pub fn row(&self, k: usize, s: usize) -> Vec<C64> {
        (0..self.num_aps).flat_map(|l| self.link(k, l, s).iter().copied()).collect()
    }

    /// Mean over subbands of `||h_{k,l,s}||^2`.
    pub fn large_scale_gain(&self, k: usize, l: usize) -> f64 {
        self.gain[k * self.num_aps + l]
    }

    pub fn large_scale_gains(&self) -> Vec<Vec<f64>> {
        self.gain.chunks(self.num_aps.max(1)).take(self.num_ues).map(<[f64]>::to_vec).collect()
    }

    pub fn raw(&self) -> &[C64] {
        &self.h
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"CFR1")?;
        for d in [self.num_ues, self.num_aps, self.num_subbands, self.antennas] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for z in &self.h {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"CFR1" {
            return Err(Error::Format { what: "CFR1 file", detail: "bad magic".into() });
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let count = dims.iter().product::<usize>();
        let mut h = Vec::with_capacity(count);
        let mut b = [0u8; 16];
        for _ in 0..count {
            r.read_exact(&mut b)?;
            let re = f64::from_le_bytes(b[..8].try_into().unwrap());
            let im = f64::from_le_bytes(b[8..].try_into().unwrap());
            h.push(C64::new(re, im));
        }
        Self::from_raw(dims[0], dims[1], dims[2], dims[3], h)
    }

    /// Per-link per-subband gain in dB: `ue,ap,subband,freq_hz,gain_db`.
    pub fn write_gain_csv<W: Write>(&self, mut w: W, freqs: &[f64]) -> Result<()> {
        writeln!(w, "ue,ap,subband,freq_hz,gain_db")?;
        for k in 0..self.num_ues {
            for l in 0..self.num_aps {
                for s in 0..self.num_subbands {
                    let g = 10.0 * norm_sqr(self.link(k, l, s)).log10();
                    let f = freqs.get(s).copied().unwrap_or(f64::NAN);
                    writeln!(w, "{k},{l},{s},{f},{g}")?;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(C64::norm_sqr).sum()
}

pub fn distance_3d(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn generate_cfr(dep: &Deployment, fading: &FadingParams, config: &DeploymentConfig) -> Result<ChannelTensor> {
    config.validate()?;
    fading.validate()?;
    let (num_ues, num_aps) = (dep.ue_positions.len(), dep.ap_positions.len());
    if num_aps != config.num_aps {
        return Err(Error::ShapeMismatch { expected: config.num_aps, got: num_aps });
    }
    if num_ues != config.num_ues {
        return Err(Error::ShapeMismatch { expected: config.num_ues, got: num_ues });
    }
    let freqs = config.subband_frequencies();
    let wavelength = config.wavelength_m();
    let n = config.antennas_per_ap;
    let mut h = Vec::with_capacity(num_ues * num_aps * freqs.len() * n);
    for (k, ue) in dep.ue_positions.iter().enumerate() {
        for (l, ap) in dep.ap_positions.iter().enumerate() {
            let d = distance_3d(ue, ap);
            if d <= f64::EPSILON {
                return Err(Error::DegenerateGeometry { ue: k, ap: l });
            }
            let mut r = rng::stream(config.seed, &[TAG_LINK, k as u64, l as u64]);
            let shadow: f64 = StandardNormal.sample(&mut r);
            let pl_db = match fading.path_loss {
                PathLossModel::UmiStreetCanyon => path_loss_db(d, config.carrier_hz),
                PathLossModel::None => 0.0,
            };
            let scale = 10f64.powf((-pl_db + fading.shadowing_db * shadow) / 20.0);
            let taps = draw_taps(&mut r, fading);
            for &f in &freqs {
                h.extend(tap_response(&taps, f, n, fading.array, wavelength).into_iter().map(|z| z * scale));
            }
        }
    }
    ChannelTensor::from_raw(num_ues, num_aps, freqs.len(), n, h)
}
