//! Generative forward model: recordings with planted narrow-band sources,
//! known mixing patterns, event-locked envelope gain profiles and a target
//! variable comodulating with planted source power.
//!
//! Sources are band-limited Gaussian noise (white noise through the source's
//! band filter), so envelopes are nontrivial. Everything is a deterministic
//! function of the generator spec and its seed; independent RNG streams feed
//! the schedule, the latent trial variables, the source noise and the sensor
//! noise.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, StandardNormal};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{bandpass_filter, Band, Event, Recording};
use crate::sweep::Component;

/// Strictly positive piecewise-linear gain curve over a window relative to an
/// event. Outside `[t_start, t_end]` the gain is 1 (no effect).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    /// Knot times in seconds relative to the event, ascending.
    pub times: Vec<f64>,
    /// Gain at each knot, all > 0.
    pub values: Vec<f64>,
}

impl GainCurve {
    pub fn constant(gain: f64) -> Self {
        Self { times: vec![-0.3, 2.0], values: vec![gain, gain] }
    }

    /// Unit gain outside [0, hold] with a dip/boost of `gain` inside it.
    pub fn step(gain: f64, from: f64, to: f64) -> Self {
        let eps = 1e-3;
        Self {
            times: vec![-0.3, from - eps, from, to, to + eps, 2.0],
            values: vec![1.0, 1.0, gain, gain, 1.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() || self.times.len() < 2 {
            return Err(Error::InvalidParameter("gain curve needs matching knots (>= 2)".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("gain curve times must be ascending".into()));
        }
        if self.values.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("gain curve values must be > 0".into()));
        }
        Ok(())
    }

    /// Linear interpolation inside the knot range, 1.0 outside.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t < self.times[0] || t > self.times[n - 1] {
            return 1.0;
        }
        let idx = match self.times.iter().position(|&k| k >= t) {
            Some(0) => return self.values[0],
            Some(i) => i,
            None => return self.values[n - 1],
        };
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let (v0, v1) = (self.values[idx - 1], self.values[idx]);
        let frac = (t - t0) / (t1 - t0);
        v0 + (v1 - v0) * frac
    }
}

/// One planted oscillatory source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedSource {
    pub band: Band,
    /// Mixing pattern over channels, unit Euclidean norm.
    pub pattern: Vec<f64>,
    /// Event-locked amplitude gain curves, applied multiplicatively.
    pub envelope_profile: BTreeMap<String, GainCurve>,
    /// Requested Pearson correlation between trial-wise power and z, in [0, 1].
    pub comodulation_strength: f64,
    pub base_amplitude: f64,
    /// Depth of the trial-wise power modulation (power multiplier
    /// `max(1 + depth * latent, 0.02)`).
    #[serde(default = "default_modulation_depth")]
    pub modulation_depth: f64,
}

fn default_modulation_depth() -> f64 {
    0.5
}

/// Jitter ranges of the within-trial event sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventSchedule {
    /// Uniform delay from get-ready to go-cue in seconds.
    pub get_ready_to_go_cue: [f64; 2],
    /// Log-normal gaps between successive hits (and go-cue to first hit);
    /// parameters of ln(gap).
    pub hit_gap_log_mean: f64,
    pub hit_gap_log_std: f64,
    pub n_hits: usize,
    /// Uniform pause from the last hit to the next trial's get-ready.
    pub inter_trial: [f64; 2],
    /// Quiet lead-in before the first trial, seconds.
    pub lead_in: f64,
    /// Quiet tail after the last event, seconds.
    pub tail: f64,
}

impl Default for EventSchedule {
    fn default() -> Self {
        Self {
            get_ready_to_go_cue: [2.0, 3.0],
            hit_gap_log_mean: 0.8f64.ln(),
            hit_gap_log_std: 0.25,
            n_hits: 4,
            inter_trial: [1.5, 2.0],
            lead_in: 2.0,
            tail: 2.5,
        }
    }
}

/// Full generator specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_channels: usize,
    pub fs: f64,
    pub n_trials: usize,
    #[serde(default)]
    pub event_schedule: EventSchedule,
    pub sources: Vec<PlantedSource>,
    /// Standard deviation of the sensor noise (equal-power 1/f plus white).
    pub noise_level: f64,
    pub seed: u64,
}

/// Everything the generator knows that the pipeline must rediscover.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sources: Vec<PlantedSource>,
    /// Mixing matrix, one column per source (row-major, n_channels rows).
    pub mixing: Vec<Vec<f64>>,
    /// Target variable, one value per trial.
    pub z: Vec<f64>,
    /// Trial-wise power multiplier per source: `powers[trial][source]`.
    pub powers: Vec<Vec<f64>>,
}

fn validate_spec(spec: &GeneratorSpec) -> Result<()> {
    if spec.n_trials < 1 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    if spec.n_channels < 1 {
        return Err(Error::InvalidParameter("need at least one channel".into()));
    }
    if !(spec.fs > 0.0) {
        return Err(Error::InvalidParameter("sample rate must be positive".into()));
    }
    if !(spec.noise_level >= 0.0) {
        return Err(Error::InvalidParameter("noise level must be >= 0".into()));
    }
    for (i, src) in spec.sources.iter().enumerate() {
        if src.pattern.len() != spec.n_channels {
            return Err(Error::DimensionMismatch(format!(
                "source {i} pattern has {} entries for {} channels",
                src.pattern.len(),
                spec.n_channels
            )));
        }
        let norm: f64 = src.pattern.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "source {i} pattern norm {norm} is not 1"
            )));
        }
        if !(0.0..=1.0).contains(&src.comodulation_strength) {
            return Err(Error::InvalidParameter(format!(
                "source {i} comodulation strength outside [0, 1]"
            )));
        }
        if !(src.base_amplitude > 0.0) {
            return Err(Error::InvalidParameter(format!("source {i} amplitude must be > 0")));
        }
        for curve in src.envelope_profile.values() {
            curve.validate()?;
        }
        src.band.validate(spec.fs)?;
    }
    Ok(())
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Event times for all trials, in seconds.
fn build_schedule(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let sched = &spec.event_schedule;
    let hit_gap = LogNormal::new(sched.hit_gap_log_mean, sched.hit_gap_log_std).unwrap();
    let mut events = Vec::new();
    let mut t = sched.lead_in;
    for _ in 0..spec.n_trials {
        let push = |events: &mut Vec<Event>, name: &str, time: f64| {
            events.push(Event { name: name.to_string(), sample: (time * spec.fs).round() as usize });
        };
        push(&mut events, "get-ready", t);
        let go = t + rng.gen_range(sched.get_ready_to_go_cue[0]..=sched.get_ready_to_go_cue[1]);
        push(&mut events, "go-cue", go);
        let mut cursor = go;
        for h in 0..sched.n_hits {
            cursor += hit_gap.sample(rng);
            push(&mut events, &format!("hit{}", h + 1), cursor);
        }
        t = cursor + rng.gen_range(sched.inter_trial[0]..=sched.inter_trial[1]);
    }
    events
}

/// 1/f-shaped unit-variance noise via spectral shaping of white noise.
fn pink_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            Complex64::new(v, 0.0)
        })
        .collect();
    fft.process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, v) in buf.iter_mut().enumerate().skip(1) {
        let f = k.min(n - k) as f64; // symmetric bin frequency
        *v *= 1.0 / f.sqrt();
    }
    ifft.process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re / n as f64).collect();
    let mean = out.iter().sum::<f64>() / n as f64;
    let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
    for v in &mut out {
        *v = (*v - mean) * scale;
    }
    out
}

/// Synthesize a recording and its ground truth.
pub fn generate_recording(spec: &GeneratorSpec) -> Result<(Recording, GroundTruth)> {
    validate_spec(spec)?;
    let fs = spec.fs;

    let mut schedule_rng = stream_rng(spec.seed, 0);
    let events = build_schedule(spec, &mut schedule_rng);
    let last_sample = events.iter().map(|e| e.sample).max().unwrap_or(0);
    let n_s = last_sample + (spec.event_schedule.tail * fs).ceil() as usize;

    // Latent trial variables: z plus one power modulator per source. Source 0
    // is the designated informative source; z is built from its latent so the
    // remaining sources can be correlated with z directly.
    let mut latent_rng = stream_rng(spec.seed, 1);
    let n_src = spec.sources.len();
    let mut z = vec![0.0f64; spec.n_trials];
    let mut modulators = vec![vec![0.0f64; n_src]; spec.n_trials];
    for trial in 0..spec.n_trials {
        let x0: f64 = StandardNormal.sample(&mut latent_rng);
        let zeta: f64 = StandardNormal.sample(&mut latent_rng);
        let rho0 = spec.sources.first().map(|s| s.comodulation_strength).unwrap_or(0.0);
        let zv = rho0 * x0 + (1.0 - rho0 * rho0).sqrt() * zeta;
        z[trial] = zv;
        for (i, src) in spec.sources.iter().enumerate() {
            if i == 0 {
                modulators[trial][0] = x0;
            } else {
                let eta: f64 = StandardNormal.sample(&mut latent_rng);
                let rho = src.comodulation_strength;
                modulators[trial][i] = rho * zv + (1.0 - rho * rho).sqrt() * eta;
            }
        }
    }
    let powers: Vec<Vec<f64>> = modulators
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(i, &x)| (1.0 + spec.sources[i].modulation_depth * x).max(0.02))
                .collect()
        })
        .collect();

    // Trial span boundaries (sample of each get-ready).
    let trial_starts: Vec<usize> =
        events.iter().filter(|e| e.name == "get-ready").map(|e| e.sample).collect();
    let trial_at = |sample: usize| -> Option<usize> {
        if trial_starts.is_empty() || sample < trial_starts[0] {
            return None;
        }
        let idx = trial_starts.partition_point(|&s| s <= sample);
        Some(idx - 1)
    };

    let mut data = Array2::<f64>::zeros((spec.n_channels, n_s));

    for (i, src) in spec.sources.iter().enumerate() {
        let mut src_rng = stream_rng(spec.seed, 10 + i as u64);
        let white: Vec<f64> = (0..n_s).map(|_| StandardNormal.sample(&mut src_rng)).collect();
        let carrier_rec = Recording::new(
            Array2::from_shape_vec((1, n_s), white).expect("shape"),
            fs,
            vec!["src".into()],
            vec![],
        )?;
        let narrow = bandpass_filter(&carrier_rec, src.band)?;
        let narrow = narrow.data().row(0).to_owned();
        let std = {
            let var = narrow.iter().map(|v| v * v).sum::<f64>() / n_s as f64;
            var.sqrt()
        };
        if !(std > 0.0) {
            return Err(Error::DegenerateEpoch(format!("source {i} carrier has zero power")));
        }

        // Amplitude envelope: base x sqrt(trial power) x event gain product.
        let mut amplitude = vec![src.base_amplitude / std; n_s];
        for (t, a) in amplitude.iter_mut().enumerate() {
            if let Some(trial) = trial_at(t) {
                *a *= powers[trial][i].sqrt();
            }
        }
        for ev in &events {
            if let Some(curve) = src.envelope_profile.get(&ev.name) {
                let w0 = ev.sample as i64 + (curve.times[0] * fs).floor() as i64;
                let w1 = ev.sample as i64 + (curve.times[curve.times.len() - 1] * fs).ceil() as i64;
                for t in w0.max(0)..(w1 + 1).min(n_s as i64) {
                    let rel = (t - ev.sample as i64) as f64 / fs;
                    amplitude[t as usize] *= curve.eval(rel);
                }
            }
        }

        for (t, (&carrier, &amp)) in narrow.iter().zip(&amplitude).enumerate() {
            let s = carrier * amp;
            for c in 0..spec.n_channels {
                data[[c, t]] += src.pattern[c] * s;
            }
        }
    }

    if spec.noise_level > 0.0 {
        let w = spec.noise_level * 0.5f64.sqrt();
        for c in 0..spec.n_channels {
            let mut noise_rng = stream_rng(spec.seed, 100 + c as u64);
            let pink = pink_noise(n_s, &mut noise_rng);
            for t in 0..n_s {
                let wn: f64 = StandardNormal.sample(&mut noise_rng);
                data[[c, t]] += w * (pink[t] + wn);
            }
        }
    }

    let channel_names = (0..spec.n_channels).map(|c| format!("C{c:02}")).collect();
    let recording = Recording::new(data, fs, channel_names, events)?;
    let mixing: Vec<Vec<f64>> = (0..spec.n_channels)
        .map(|c| spec.sources.iter().map(|s| s.pattern[c]).collect())
        .collect();
    let ground_truth = GroundTruth { sources: spec.sources.clone(), mixing, z, powers };
    Ok((recording, ground_truth))
}

/// Built-in demonstration spec: 32 channels at 250 Hz with three planted
/// sources in distinct bands (10, 22 and 35 Hz), distinct event-locked
/// gain profiles and strong power comodulation with the target variable.
pub fn demo_generator_spec(n_trials: usize, seed: u64) -> GeneratorSpec {
    let n_c = 32;
    let bump = |center: f64, width: f64, phase: f64| -> Vec<f64> {
        let raw: Vec<f64> = (0..n_c)
            .map(|c| {
                let d = (c as f64 - center) / width;
                (-0.5 * d * d).exp() * (1.0 + 0.3 * ((c as f64 + phase) * 0.9).sin())
            })
            .collect();
        unit_pattern(&raw)
    };
    let curves = |entries: &[(&str, GainCurve)]| -> BTreeMap<String, GainCurve> {
        entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    };
    let sources = vec![
        PlantedSource {
            band: Band::new(10.0, 4.0),
            pattern: bump(8.0, 4.0, 0.0),
            envelope_profile: curves(&[
                ("go-cue", GainCurve::step(0.45, 0.0, 0.8)),
                ("hit3", GainCurve::step(1.6, 0.0, 0.5)),
            ]),
            comodulation_strength: 0.85,
            base_amplitude: 1.0,
            modulation_depth: 0.8,
        },
        PlantedSource {
            band: Band::new(22.0, 5.0),
            pattern: bump(18.0, 5.0, 2.0),
            envelope_profile: curves(&[
                ("go-cue", GainCurve::step(1.9, 0.1, 0.9)),
                ("hit4", GainCurve::step(1.7, 0.0, 0.6)),
            ]),
            comodulation_strength: 0.85,
            base_amplitude: 1.0,
            modulation_depth: 0.8,
        },
        PlantedSource {
            band: Band::new(35.0, 6.0),
            pattern: bump(26.0, 4.5, 5.0),
            envelope_profile: curves(&[
                ("go-cue", GainCurve::step(0.5, 0.3, 1.2)),
                ("get-ready", GainCurve::step(1.5, 0.2, 1.0)),
            ]),
            comodulation_strength: 0.85,
            base_amplitude: 1.0,
            modulation_depth: 0.8,
        },
    ];
    GeneratorSpec {
        n_channels: n_c,
        fs: 250.0,
        n_trials,
        event_schedule: EventSchedule::default(),
        sources,
        noise_level: 0.6,
        seed,
    }
}

/// Agreement of a harvested component with the closest planted source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCheck {
    /// Sign-invariant angle to the best-matching planted pattern, degrees.
    pub pattern_angle_deg: f64,
    /// Center-frequency error to that source's band, Hz.
    pub band_error_hz: f64,
    pub best_source: usize,
}

/// Compare a component's activity pattern and band against the ground truth.
pub fn oracle_component_check(ground_truth: &GroundTruth, component: &Component) -> Result<OracleCheck> {
    if ground_truth.sources.is_empty() {
        return Err(Error::InvalidParameter("ground truth has no sources".into()));
    }
    let a = &component.pattern_unit;
    if a.len() != ground_truth.sources[0].pattern.len() {
        return Err(Error::DimensionMismatch(format!(
            "pattern of {} channels vs ground truth {}",
            a.len(),
            ground_truth.sources[0].pattern.len()
        )));
    }
    let mut best = OracleCheck { pattern_angle_deg: f64::INFINITY, band_error_hz: 0.0, best_source: 0 };
    for (i, src) in ground_truth.sources.iter().enumerate() {
        let dot: f64 = a.iter().zip(&src.pattern).map(|(x, y)| x * y).sum();
        let norm_a: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cosine = (dot.abs() / norm_a.max(1e-300)).clamp(0.0, 1.0);
        let angle = cosine.acos().to_degrees();
        if angle < best.pattern_angle_deg {
            best = OracleCheck {
                pattern_angle_deg: angle,
                band_error_hz: (component.config.f0 - src.band.f0).abs(),
                best_source: i,
            };
        }
    }
    Ok(best)
}

/// Pearson correlation of two equal-length slices.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Unit-norm pattern helper for test setups.
pub fn unit_pattern(raw: &[f64]) -> Vec<f64> {
    let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| v / norm).collect()
}
