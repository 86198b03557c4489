//! Multichannel recordings, zero-phase band-pass filtering, epoching and
//! outlier rejection.
//!
//! Narrow-band filtering uses a 5th-order Butterworth band-pass designed in
//! the analog domain (pole/zero form), mapped through the bilinear transform
//! and realized as a cascade of second-order sections. Filters are applied
//! forward-backward so the net phase shift is zero and event alignment is
//! preserved.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// A named event marker at a sample index.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Event {
    pub name: String,
    pub sample: usize,
}

/// Multichannel time series with sample rate and event markers.
///
/// Immutable after construction; safe to share read-only across workers.
#[derive(Debug, Clone)]
pub struct Recording {
    data: Array2<f64>,
    fs: f64,
    channel_names: Vec<String>,
    events: Vec<Event>,
}

impl Recording {
    pub fn new(
        data: Array2<f64>,
        fs: f64,
        channel_names: Vec<String>,
        events: Vec<Event>,
    ) -> Result<Self> {
        let (n_c, n_s) = data.dim();
        if n_c < 1 || n_s < 1 {
            return Err(Error::InvalidRecording(format!(
                "need at least one channel and one sample, got {n_c} x {n_s}"
            )));
        }
        if !(fs > 0.0) {
            return Err(Error::InvalidRecording(format!("sample rate {fs} must be > 0")));
        }
        if channel_names.len() != n_c {
            return Err(Error::InvalidRecording(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                n_c
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &channel_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidRecording(format!("duplicate channel name '{name}'")));
            }
        }
        for ev in &events {
            if ev.sample >= n_s {
                return Err(Error::InvalidRecording(format!(
                    "event '{}' at sample {} outside recording of {} samples",
                    ev.name, ev.sample, n_s
                )));
            }
        }
        Ok(Self { data, fs, channel_names, events })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Sample indices of all events with the given name, in chronological order.
    pub fn event_samples(&self, name: &str) -> Vec<usize> {
        let mut samples: Vec<usize> = self
            .events
            .iter()
            .filter(|e| e.name == name)
            .map(|e| e.sample)
            .collect();
        samples.sort_unstable();
        samples
    }

    /// Distinct event names in order of first occurrence.
    pub fn event_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for ev in &self.events {
            if !names.iter().any(|n| n == &ev.name) {
                names.push(ev.name.clone());
            }
        }
        names
    }
}

/// A frequency band given by center frequency and bandwidth, both in Hz.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Band {
    pub f0: f64,
    pub df: f64,
}

impl Band {
    pub fn new(f0: f64, df: f64) -> Self {
        Self { f0, df }
    }

    pub fn lo(&self) -> f64 {
        self.f0 - self.df / 2.0
    }

    pub fn hi(&self) -> f64 {
        self.f0 + self.df / 2.0
    }

    /// Check that both band edges are usable at the given sample rate.
    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.lo() > 0.0) {
            return Err(Error::InvalidBand(format!(
                "lower edge {:.3} Hz must be > 0 (f0 {}, df {})",
                self.lo(),
                self.f0,
                self.df
            )));
        }
        if !(self.hi() < fs / 2.0) {
            return Err(Error::InvalidBand(format!(
                "upper edge {:.3} Hz must be below Nyquist {:.3} Hz",
                self.hi(),
                fs / 2.0
            )));
        }
        Ok(())
    }
}

/// Epochs extracted relative to one event name.
///
/// Layout is (epoch, channel, sample). `kept_occurrences[i]` is the index of
/// epoch `i` in the chronological list of event occurrences, so callers can
/// align per-trial side data when windows near the recording edges were
/// skipped.
#[derive(Debug, Clone)]
pub struct EpochSet {
    pub epochs: Array3<f64>,
    pub t0: f64,
    pub dt: f64,
    pub event_name: String,
    pub kept_occurrences: Vec<usize>,
    pub n_skipped: usize,
    pub unknown_event: bool,
}

impl EpochSet {
    pub fn n_epochs(&self) -> usize {
        self.epochs.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.epochs.dim().1
    }

    pub fn epoch_len(&self) -> usize {
        self.epochs.dim().2
    }

    pub fn epoch(&self, i: usize) -> ArrayView2<'_, f64> {
        self.epochs.index_axis(ndarray::Axis(0), i)
    }
}

const BUTTER_ORDER: usize = 5;
// Odd-extension pad length multiplier for forward-backward filtering. The
// narrowest default bands ring for a few hundred samples; 12 sections' worth
// of padding keeps end transients out of the interior.
const PAD_FACTOR: usize = 12;

/// One normalized second-order section (a0 = 1).
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

/// A designed band-pass filter as a cascade of second-order sections.
#[derive(Debug, Clone)]
pub struct BandpassFilter {
    pub sections: Vec<Biquad>,
    pub band: Band,
    pub fs: f64,
}

/// Design a 5th-order Butterworth band-pass for the given band and rate.
pub fn design_bandpass(band: Band, fs: f64) -> Result<BandpassFilter> {
    band.validate(fs)?;
    let n = BUTTER_ORDER;

    // Prewarp the band edges (frequencies normalized to Nyquist, fs2 = 2).
    let fs2 = 2.0;
    let w1 = 2.0 * fs2 * (std::f64::consts::PI * (band.lo() / (fs / 2.0)) / 2.0).tan();
    let w2 = 2.0 * fs2 * (std::f64::consts::PI * (band.hi() / (fs / 2.0)) / 2.0).tan();
    let bw = w2 - w1;
    let wo = (w1 * w2).sqrt();

    // Analog Butterworth low-pass prototype: n poles on the left unit circle.
    let proto_poles: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64;
            Complex64::new(-theta.sin(), theta.cos())
        })
        .collect();

    // Low-pass to band-pass: each pole splits into a pair, n zeros land at s = 0.
    let mut poles = Vec::with_capacity(2 * n);
    for &p in &proto_poles {
        let s = p * (bw / 2.0);
        let disc = (s * s - Complex64::new(wo * wo, 0.0)).sqrt();
        poles.push(s + disc);
        poles.push(s - disc);
    }
    let gain_bp = bw.powi(n as i32);

    // Bilinear transform. Analog zeros at 0 map to z = +1; the n
    // degree-compensation zeros land at z = -1.
    let c = 2.0 * fs2;
    let mut num = Complex64::new(1.0, 0.0);
    let mut den = Complex64::new(1.0, 0.0);
    for _ in 0..n {
        num *= Complex64::new(c, 0.0); // c - 0
    }
    let digital_poles: Vec<Complex64> = poles
        .iter()
        .map(|&p| {
            den *= Complex64::new(c, 0.0) - p;
            (Complex64::new(c, 0.0) + p) / (Complex64::new(c, 0.0) - p)
        })
        .collect();
    let k_digital = gain_bp * (num / den).re;

    let pairs = pair_conjugate_poles(&digital_poles)?;
    if k_digital <= 0.0 {
        return Err(Error::InvalidBand(format!(
            "degenerate design for band ({}, {}) at fs {}",
            band.f0, band.df, fs
        )));
    }
    // Each section takes one zero at +1 and one at -1, i.e. numerator z^2 - 1,
    // with the overall gain spread evenly across sections.
    let g = k_digital.powf(1.0 / n as f64);
    let sections = pairs
        .into_iter()
        .map(|(p1, p2)| Biquad {
            b0: g,
            b1: 0.0,
            b2: -g,
            a1: -(p1 + p2).re,
            a2: (p1 * p2).re,
        })
        .collect();

    Ok(BandpassFilter { sections, band, fs })
}

/// Group digital poles into conjugate (or real) pairs, most damped first.
fn pair_conjugate_poles(poles: &[Complex64]) -> Result<Vec<(Complex64, Complex64)>> {
    let tol = 1e-9;
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > tol).collect();
    let mut conj: Vec<Complex64> = poles.iter().copied().filter(|p| p.im < -tol).collect();
    let mut real: Vec<Complex64> = poles.iter().copied().filter(|p| p.im.abs() <= tol).collect();

    let mut pairs = Vec::new();
    for p in complex.drain(..) {
        let target = p.conj();
        let (idx, _) = conj
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (**a - target).norm().partial_cmp(&(**b - target).norm()).unwrap()
            })
            .ok_or_else(|| Error::InvalidBand("unpaired complex pole".into()))?;
        let q = conj.swap_remove(idx);
        pairs.push((p, q));
    }
    if !conj.is_empty() {
        return Err(Error::InvalidBand("unpaired complex pole".into()));
    }
    real.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
    let mut it = real.into_iter();
    while let (Some(a), Some(b)) = (it.next(), it.next()) {
        pairs.push((a, b));
    }
    pairs.sort_by(|x, y| {
        let nx = (x.0 * x.1).norm();
        let ny = (y.0 * y.1).norm();
        nx.partial_cmp(&ny).unwrap()
    });
    Ok(pairs)
}

/// Run the cascade over `x` with per-section initial state scaled to `x0`.
fn sosfilt(sections: &[Biquad], x: &mut [f64], x0: f64) {
    // Steady-state step response state per section (direct form II transposed)
    // so that a constant input produces a constant output from sample zero.
    let mut level = x0;
    let mut states: Vec<(f64, f64)> = Vec::with_capacity(sections.len());
    for s in sections {
        let h1 = s.dc_gain();
        let z1 = (s.b1 + s.b2 - (s.a1 + s.a2) * h1) * level;
        let z2 = (s.b2 - s.a2 * h1) * level;
        states.push((z1, z2));
        level *= h1;
    }
    for (s, st) in sections.iter().zip(states.iter_mut()) {
        let (mut z1, mut z2) = *st;
        for v in x.iter_mut() {
            let xin = *v;
            let y = s.b0 * xin + z1;
            z1 = s.b1 * xin - s.a1 * y + z2;
            z2 = s.b2 * xin - s.a2 * y;
            *v = y;
        }
        *st = (z1, z2);
    }
}

/// Zero-phase application of `filter` to a single channel.
pub fn filtfilt(filter: &BandpassFilter, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let min_len = 3 * (2 * filter.sections.len() + 1) + 1;
    if n < min_len {
        return Err(Error::InsufficientData(format!(
            "signal of {n} samples too short to filter (need at least {min_len})"
        )));
    }
    let padlen = (PAD_FACTOR * (2 * filter.sections.len() + 1)).min(n - 1);

    // Odd extension at both ends.
    let mut ext = Vec::with_capacity(n + 2 * padlen);
    for i in 0..padlen {
        ext.push(2.0 * x[0] - x[padlen - i]);
    }
    ext.extend_from_slice(x);
    for i in 0..padlen {
        ext.push(2.0 * x[n - 1] - x[n - 2 - i]);
    }

    let first = ext[0];
    sosfilt(&filter.sections, &mut ext, first);
    ext.reverse();
    let first = ext[0];
    sosfilt(&filter.sections, &mut ext, first);
    ext.reverse();

    Ok(ext[padlen..padlen + n].to_vec())
}

/// Band-pass filter every channel of a recording, zero phase.
pub fn bandpass_filter(recording: &Recording, band: Band) -> Result<Recording> {
    let filter = design_bandpass(band, recording.fs())?;
    let mut out = Array2::zeros(recording.data().dim());
    for (ch, row) in recording.data().outer_iter().enumerate() {
        let x: Vec<f64> = row.to_vec();
        let y = filtfilt(&filter, &x)?;
        out.row_mut(ch).assign(&ndarray::ArrayView1::from(&y));
    }
    Recording::new(
        out,
        recording.fs(),
        recording.channel_names().to_vec(),
        recording.events().to_vec(),
    )
}

/// Extract epochs `[t0, t0 + dt]` relative to every occurrence of an event.
///
/// Windows that cross the recording boundary are skipped and counted, not
/// zero-padded. An unknown event name yields an empty set with the
/// `unknown_event` flag raised.
pub fn segment(recording: &Recording, event_name: &str, t0: f64, dt: f64) -> Result<EpochSet> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("epoch length {dt} must be > 0")));
    }
    let fs = recording.fs();
    let t_e = (dt * fs).round() as usize;
    let start_offset = (t0 * fs).round() as i64;
    let n_s = recording.n_samples() as i64;

    let samples = recording.event_samples(event_name);
    let unknown_event = samples.is_empty();

    let mut kept = Vec::new();
    let mut n_skipped = 0usize;
    for (occ, &ev_sample) in samples.iter().enumerate() {
        let start = ev_sample as i64 + start_offset;
        if start >= 0 && start + t_e as i64 <= n_s {
            kept.push((occ, start as usize));
        } else {
            n_skipped += 1;
        }
    }

    let mut epochs = Array3::zeros((kept.len(), recording.n_channels(), t_e));
    for (i, &(_, start)) in kept.iter().enumerate() {
        epochs
            .index_axis_mut(ndarray::Axis(0), i)
            .assign(&recording.data().slice(ndarray::s![.., start..start + t_e]));
    }

    Ok(EpochSet {
        epochs,
        t0,
        dt,
        event_name: event_name.to_string(),
        kept_occurrences: kept.into_iter().map(|(occ, _)| occ).collect(),
        n_skipped,
        unknown_event,
    })
}

/// Geometrically spaced overlapping band grid.
///
/// Center frequencies are geometric over `f0_range`; bandwidths are linear in
/// `log(f0)` over `df_range`, which reduces to linear interpolation over the
/// band index.
pub fn band_grid(n_bands: usize, f0_range: [f64; 2], df_range: [f64; 2]) -> Result<Vec<Band>> {
    if n_bands < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bands, got {n_bands}")));
    }
    let [f0_min, f0_max] = f0_range;
    let [df_min, df_max] = df_range;
    if !(f0_min > 0.0 && f0_max > f0_min) {
        return Err(Error::InvalidParameter(format!(
            "center frequency range [{f0_min}, {f0_max}] must be positive and increasing"
        )));
    }
    if !(df_min > 0.0 && df_max >= df_min) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth range [{df_min}, {df_max}] must be positive and ordered"
        )));
    }
    let n = n_bands;
    let ratio = f0_max / f0_min;
    let bands = (0..n)
        .map(|i| {
            let frac = i as f64 / (n - 1) as f64;
            let f0 = if i == 0 {
                f0_min
            } else if i == n - 1 {
                f0_max
            } else {
                f0_min * ratio.powf(frac)
            };
            let df = df_min + (df_max - df_min) * frac;
            Band::new(f0, df)
        })
        .collect();
    Ok(bands)
}

/// Linear-interpolation percentile of an unsorted slice.
pub(crate) fn percentile(values: &[f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    percentile_sorted(&sorted, p)
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

fn channel_variance(epoch_ch: ArrayView1<'_, f64>) -> f64 {
    let n = epoch_ch.len();
    if n < 2 {
        return 0.0;
    }
    let mean = epoch_ch.sum() / n as f64;
    epoch_ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

fn channel_range(epoch_ch: ArrayView1<'_, f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in epoch_ch {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// Keep-mask over epochs using a variance and a min-max criterion.
///
/// An epoch is rejected when its max-over-channels variance or its
/// max-over-channels min-max range exceeds `P90 + 2 (P90 - P10)` of that
/// statistic's pooled distribution.
pub fn reject_outlier_epochs(epochs: &EpochSet) -> Result<Vec<bool>> {
    let n_e = epochs.n_epochs();
    if n_e < 5 {
        return Err(Error::InsufficientData(format!(
            "epoch outlier statistics need at least 5 epochs, got {n_e}"
        )));
    }
    let mut max_var = Vec::with_capacity(n_e);
    let mut max_range = Vec::with_capacity(n_e);
    for e in 0..n_e {
        let ep = epochs.epoch(e);
        let mut v = 0.0f64;
        let mut r = 0.0f64;
        for ch in ep.outer_iter() {
            v = v.max(channel_variance(ch));
            r = r.max(channel_range(ch));
        }
        max_var.push(v);
        max_range.push(r);
    }
    let bound = |stat: &[f64]| {
        let p90 = percentile(stat, 90.0);
        let p10 = percentile(stat, 10.0);
        p90 + 2.0 * (p90 - p10)
    };
    let var_bound = bound(&max_var);
    let range_bound = bound(&max_range);
    Ok((0..n_e)
        .map(|e| max_var[e] <= var_bound && max_range[e] <= range_bound)
        .collect())
}

/// Two-step noisy-channel rejection over pooled per-epoch channel variances.
///
/// Step one marks (epoch, channel) variance cases lying more than twice the
/// `[P10, P90]` inter-percentile range outside those percentiles. Step two
/// removes channels holding more than 10% of all outlier cases and with
/// outliers in at least 5% of epochs.
pub fn reject_noisy_channels(recording: &Recording, epochs: &EpochSet) -> Result<Vec<bool>> {
    let n_e = epochs.n_epochs();
    let n_c = epochs.n_channels();
    if n_e < 5 {
        return Err(Error::InsufficientData(format!(
            "channel rejection needs at least 5 epochs, got {n_e}"
        )));
    }
    if n_c < 2 {
        return Err(Error::InsufficientData("channel rejection needs at least 2 channels".into()));
    }
    if recording.n_channels() != n_c {
        return Err(Error::DimensionMismatch(format!(
            "recording has {} channels, epochs have {n_c}",
            recording.n_channels()
        )));
    }

    let mut pooled = Vec::with_capacity(n_e * n_c);
    let mut per_case = Array2::zeros((n_e, n_c));
    for e in 0..n_e {
        let ep = epochs.epoch(e);
        for (c, ch) in ep.outer_iter().enumerate() {
            let v = channel_variance(ch);
            per_case[[e, c]] = v;
            pooled.push(v);
        }
    }
    let p10 = percentile(&pooled, 10.0);
    let p90 = percentile(&pooled, 90.0);
    let ipr = p90 - p10;
    let hi = p90 + 2.0 * ipr;
    let lo = p10 - 2.0 * ipr;

    let mut outliers_per_channel = vec![0usize; n_c];
    let mut total_outliers = 0usize;
    for e in 0..n_e {
        for c in 0..n_c {
            let v = per_case[[e, c]];
            if v > hi || v < lo {
                outliers_per_channel[c] += 1;
                total_outliers += 1;
            }
        }
    }

    Ok((0..n_c)
        .map(|c| {
            if total_outliers == 0 {
                return true;
            }
            let share = outliers_per_channel[c] as f64 / total_outliers as f64;
            let rate = outliers_per_channel[c] as f64 / n_e as f64;
            !(share > 0.10 && rate >= 0.05)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sinusoid(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
            .collect()
    }

    fn interior_amplitude(x: &[f64]) -> f64 {
        let n = x.len();
        let inner = &x[n / 10..n - n / 10];
        let rms = (inner.iter().map(|v| v * v).sum::<f64>() / inner.len() as f64).sqrt();
        rms * std::f64::consts::SQRT_2
    }

    fn single_channel_recording(x: Vec<f64>, fs: f64) -> Recording {
        let n = x.len();
        Recording::new(
            Array2::from_shape_vec((1, n), x).unwrap(),
            fs,
            vec!["ch0".into()],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn passband_gain_near_unity() {
        let filter = design_bandpass(Band::new(10.0, 4.0), 500.0).unwrap();
        let x = sinusoid(10.0, 500.0, 5000);
        let y = filtfilt(&filter, &x).unwrap();
        let amp = interior_amplitude(&y);
        assert!((0.99..=1.01).contains(&amp), "passband amplitude {amp}");
    }

    #[test]
    fn stopband_attenuation_at_30hz() {
        let filter = design_bandpass(Band::new(10.0, 4.0), 500.0).unwrap();
        let x = sinusoid(30.0, 500.0, 5000);
        let y = filtfilt(&filter, &x).unwrap();
        let amp = interior_amplitude(&y);
        // >= 20 dB down
        assert!(amp <= 0.1, "stopband amplitude {amp}");
    }

    #[test]
    fn invalid_band_rejected() {
        assert!(matches!(
            design_bandpass(Band::new(1.0, 4.0), 500.0),
            Err(Error::InvalidBand(_))
        ));
        assert!(matches!(
            design_bandpass(Band::new(240.0, 40.0), 500.0),
            Err(Error::InvalidBand(_))
        ));
    }

    #[test]
    fn bandpass_recording_preserves_inband_and_rejects_outband() {
        let fs = 500.0;
        let band = Band::new(10.0, 4.0);
        let rec_in = single_channel_recording(sinusoid(10.0, fs, 5000), fs);
        let out = bandpass_filter(&rec_in, band).unwrap();
        assert_eq!(out.data().dim(), rec_in.data().dim());
        let amp = interior_amplitude(out.data().row(0).as_slice().unwrap());
        assert!((amp - 1.0).abs() < 0.01, "in-band amplitude {amp}");

        let rec_out = single_channel_recording(sinusoid(40.0, fs, 5000), fs);
        let out = bandpass_filter(&rec_out, band).unwrap();
        let amp = interior_amplitude(out.data().row(0).as_slice().unwrap());
        assert!(amp <= 0.1, "out-of-band amplitude {amp}");
    }

    #[test]
    fn all_zero_recording_stays_zero() {
        let rec = single_channel_recording(vec![0.0; 2000], 500.0);
        let out = bandpass_filter(&rec, Band::new(10.0, 4.0)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_phase_cross_correlation_peak_at_lag_zero() {
        let fs = 500.0;
        let x = sinusoid(10.0, fs, 4000);
        let filter = design_bandpass(Band::new(10.0, 4.0), fs).unwrap();
        let y = filtfilt(&filter, &x).unwrap();
        let inner = 400..3600usize;
        let mut best_lag = 0i64;
        let mut best = f64::NEG_INFINITY;
        for lag in -20i64..=20 {
            let mut acc = 0.0;
            for i in inner.clone() {
                let j = i as i64 + lag;
                acc += x[i] * y[j as usize];
            }
            if acc > best {
                best = acc;
                best_lag = lag;
            }
        }
        assert_eq!(best_lag, 0);
    }

    #[test]
    fn filter_is_linear() {
        let fs = 500.0;
        let filter = design_bandpass(Band::new(12.0, 6.0), fs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..1500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..1500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (0.75, -1.25);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let fx = filtfilt(&filter, &x).unwrap();
        let fy = filtfilt(&filter, &y).unwrap();
        let fc = filtfilt(&filter, &combo).unwrap();
        let scale: f64 = fc.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        for i in 0..fc.len() {
            let expect = a * fx[i] + b * fy[i];
            assert!(
                (fc[i] - expect).abs() / scale < 1e-9,
                "nonlinearity at {i}: {} vs {expect}",
                fc[i]
            );
        }
    }

    #[test]
    fn segment_basic_counts() {
        let fs = 500.0;
        let n = 500 * 410;
        let data = Array2::from_shape_fn((2, n), |(c, s)| (c + s) as f64);
        let events: Vec<Event> = (0..400)
            .map(|i| Event { name: "go-cue".into(), sample: 500 + i * 500 })
            .collect();
        let rec = Recording::new(data, fs, vec!["a".into(), "b".into()], events).unwrap();
        let set = segment(&rec, "go-cue", -1.0, 1.0).unwrap();
        assert_eq!(set.n_epochs(), 400);
        assert_eq!(set.epoch_len(), 500);
        assert_eq!(set.n_skipped, 0);
        assert!(!set.unknown_event);
    }

    #[test]
    fn segment_skips_out_of_range_window() {
        let data = Array2::zeros((1, 1000));
        let rec = Recording::new(
            data,
            500.0,
            vec!["a".into()],
            vec![
                Event { name: "go-cue".into(), sample: 10 },
                Event { name: "go-cue".into(), sample: 600 },
            ],
        )
        .unwrap();
        let set = segment(&rec, "go-cue", -1.0, 1.0).unwrap();
        assert_eq!(set.n_epochs(), 1);
        assert_eq!(set.n_skipped, 1);
        assert_eq!(set.kept_occurrences, vec![1]);
    }

    #[test]
    fn segment_unknown_event_flagged() {
        let data = Array2::zeros((1, 1000));
        let rec = Recording::new(data, 500.0, vec!["a".into()], vec![]).unwrap();
        let set = segment(&rec, "nope", -0.5, 0.5).unwrap();
        assert_eq!(set.n_epochs(), 0);
        assert!(set.unknown_event);
    }

    #[test]
    fn segment_windows_are_bit_identical_raw_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((3, 4000), |_| rng.gen_range(-1.0..1.0));
        let events = vec![
            Event { name: "e".into(), sample: 700 },
            Event { name: "e".into(), sample: 2100 },
        ];
        let rec = Recording::new(data.clone(), 250.0, vec!["a".into(), "b".into(), "c".into()], events)
            .unwrap();
        let set = segment(&rec, "e", -0.5, 1.0).unwrap();
        let t_e = set.epoch_len();
        for (i, &ev) in [700usize, 2100].iter().enumerate() {
            let start = ev - 125;
            for c in 0..3 {
                for s in 0..t_e {
                    assert_eq!(set.epochs[[i, c, s]], data[[c, start + s]]);
                }
            }
        }
    }

    #[test]
    fn band_grid_matches_paper_endpoints() {
        let bands = band_grid(45, [1.0, 95.0], [2.0, 10.0]).unwrap();
        assert_eq!(bands.len(), 45);
        assert_eq!(bands[0].f0, 1.0);
        assert_eq!(bands[0].df, 2.0);
        assert_eq!(bands[44].f0, 95.0);
        assert_eq!(bands[44].df, 10.0);
        // strictly increasing and overlapping
        for w in bands.windows(2) {
            assert!(w[1].f0 > w[0].f0);
            assert!(w[0].hi() > w[1].lo(), "bands {:?} and {:?} do not overlap", w[0], w[1]);
        }
    }

    #[test]
    fn band_grid_two_points_and_geometric_midpoint() {
        let bands = band_grid(2, [10.0, 40.0], [4.0, 4.0]).unwrap();
        assert_eq!(bands[0], Band::new(10.0, 4.0));
        assert_eq!(bands[1], Band::new(40.0, 4.0));

        let bands = band_grid(3, [1.0, 100.0], [2.0, 2.0]).unwrap();
        assert!((bands[1].f0 - 10.0).abs() < 1e-9);
    }

    #[test]
    fn band_grid_rejects_bad_ranges() {
        assert!(band_grid(5, [0.0, 10.0], [2.0, 4.0]).is_err());
        assert!(band_grid(5, [1.0, 10.0], [0.0, 4.0]).is_err());
        assert!(band_grid(1, [1.0, 10.0], [2.0, 4.0]).is_err());
    }

    fn noise_epochs(n_e: usize, n_c: usize, t_e: usize, seed: u64) -> EpochSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let epochs = Array3::from_shape_fn((n_e, n_c, t_e), |_| {
            rand_distr::StandardNormal.sample(&mut rng)
        });
        EpochSet {
            epochs,
            t0: 0.0,
            dt: t_e as f64 / 100.0,
            event_name: "e".into(),
            kept_occurrences: (0..n_e).collect(),
            n_skipped: 0,
            unknown_event: false,
        }
    }

    #[test]
    fn epoch_rejection_keeps_homogeneous_noise() {
        let set = noise_epochs(100, 4, 200, 11);
        let mask = reject_outlier_epochs(&set).unwrap();
        let kept = mask.iter().filter(|&&k| k).count();
        assert!(kept >= 95, "kept {kept}");
    }

    #[test]
    fn epoch_rejection_catches_scaled_epoch() {
        let mut set = noise_epochs(100, 4, 200, 12);
        set.epochs.index_axis_mut(ndarray::Axis(0), 42).mapv_inplace(|v| v * 100.0);
        let mask = reject_outlier_epochs(&set).unwrap();
        assert!(!mask[42]);
    }

    #[test]
    fn epoch_rejection_identical_epochs_all_kept() {
        let mut set = noise_epochs(20, 3, 100, 13);
        let first = set.epochs.index_axis(ndarray::Axis(0), 0).to_owned();
        for e in 0..20 {
            set.epochs.index_axis_mut(ndarray::Axis(0), e).assign(&first);
        }
        let mask = reject_outlier_epochs(&set).unwrap();
        assert!(mask.iter().all(|&k| k));
    }

    #[test]
    fn epoch_rejection_needs_five_epochs() {
        let set = noise_epochs(4, 2, 50, 14);
        assert!(reject_outlier_epochs(&set).is_err());
    }

    #[test]
    fn channel_rejection_spares_homogeneous_noise() {
        let set = noise_epochs(80, 6, 150, 21);
        let rec = Recording::new(
            Array2::zeros((6, 10)),
            100.0,
            (0..6).map(|i| format!("ch{i}")).collect(),
            vec![],
        )
        .unwrap();
        let mask = reject_noisy_channels(&rec, &set).unwrap();
        assert!(mask.iter().all(|&k| k), "mask {mask:?}");
    }

    #[test]
    fn channel_rejection_catches_intermittently_loud_channel() {
        let mut set = noise_epochs(100, 6, 150, 22);
        for e in 0..30 {
            for s in 0..150 {
                set.epochs[[e, 2, s]] *= 50.0;
            }
        }
        let rec = Recording::new(
            Array2::zeros((6, 10)),
            100.0,
            (0..6).map(|i| format!("ch{i}")).collect(),
            vec![],
        )
        .unwrap();
        let mask = reject_noisy_channels(&rec, &set).unwrap();
        assert!(!mask[2]);
        assert!(mask.iter().enumerate().all(|(c, &k)| k || c == 2));
    }

    #[test]
    fn channel_rejection_ignores_single_epoch_glitch() {
        let mut set = noise_epochs(100, 6, 150, 23);
        for s in 0..150 {
            set.epochs[[5, 3, s]] *= 50.0;
        }
        let rec = Recording::new(
            Array2::zeros((6, 10)),
            100.0,
            (0..6).map(|i| format!("ch{i}")).collect(),
            vec![],
        )
        .unwrap();
        let mask = reject_noisy_channels(&rec, &set).unwrap();
        assert!(mask[3]);
    }

    #[test]
    fn recording_invariants_enforced() {
        assert!(Recording::new(Array2::zeros((0, 5)), 100.0, vec![], vec![]).is_err());
        assert!(Recording::new(Array2::zeros((1, 5)), 0.0, vec!["a".into()], vec![]).is_err());
        assert!(Recording::new(
            Array2::zeros((2, 5)),
            100.0,
            vec!["a".into(), "a".into()],
            vec![]
        )
        .is_err());
        assert!(Recording::new(
            Array2::zeros((1, 5)),
            100.0,
            vec!["a".into()],
            vec![Event { name: "e".into(), sample: 5 }]
        )
        .is_err());
    }
}
