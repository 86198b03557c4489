//! File formats: the recording header/data pair, the ground-truth sidecar,
//! the target-variable CSV, and the pipeline's CSV/binary artifacts.
//!
//! A recording is stored as `<base>.oschdr.json` (JSON header with sample
//! rate, shape, channel names and events) plus `<base>.oscdat` holding
//! little-endian 32-bit floats in channel-major order (channel 0 all samples,
//! then channel 1, and so on).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopeProfile, EventProfile};
use crate::error::{Error, Result};
use crate::signal::{Event, Recording};
use crate::sweep::{Component, ConfigPoint, HarvestResult, SkipRecord};
use crate::synth::GroundTruth;

pub const HEADER_EXT: &str = ".oschdr.json";
pub const DATA_EXT: &str = ".oscdat";
pub const GROUND_TRUTH_EXT: &str = ".gt.json";

#[derive(Debug, Serialize, Deserialize)]
struct RecordingHeader {
    fs: f64,
    n_channels: usize,
    n_samples: usize,
    channel_names: Vec<String>,
    events: Vec<HeaderEvent>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderEvent {
    name: String,
    sample: usize,
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(ext);
    PathBuf::from(s)
}

/// Strip a known extension pair suffix so callers may pass either the base
/// path or the header path.
fn base_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    for ext in [HEADER_EXT, DATA_EXT, GROUND_TRUTH_EXT] {
        if let Some(stripped) = s.strip_suffix(ext) {
            return PathBuf::from(stripped);
        }
    }
    path.to_path_buf()
}

/// Write `<base>.oschdr.json` and `<base>.oscdat`.
pub fn write_recording(base: &Path, recording: &Recording) -> Result<(PathBuf, PathBuf)> {
    let base = base_path(base);
    let header = RecordingHeader {
        fs: recording.fs(),
        n_channels: recording.n_channels(),
        n_samples: recording.n_samples(),
        channel_names: recording.channel_names().to_vec(),
        events: recording
            .events()
            .iter()
            .map(|e| HeaderEvent { name: e.name.clone(), sample: e.sample })
            .collect(),
    };
    let hdr_path = with_ext(&base, HEADER_EXT);
    let dat_path = with_ext(&base, DATA_EXT);
    fs::write(&hdr_path, serde_json::to_string_pretty(&header)?)?;

    let mut w = BufWriter::new(fs::File::create(&dat_path)?);
    for row in recording.data().outer_iter() {
        for &v in row {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok((hdr_path, dat_path))
}

/// Read a recording from its header/data pair; accepts the base path or
/// either file's path.
pub fn read_recording(path: &Path) -> Result<Recording> {
    let base = base_path(path);
    let hdr_path = with_ext(&base, HEADER_EXT);
    let dat_path = with_ext(&base, DATA_EXT);
    let header: RecordingHeader = serde_json::from_str(&fs::read_to_string(&hdr_path)?)?;

    let mut bytes = Vec::new();
    fs::File::open(&dat_path)?.read_to_end(&mut bytes)?;
    let expected = header.n_channels * header.n_samples * 4;
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "{} holds {} bytes, header implies {expected}",
            dat_path.display(),
            bytes.len()
        )));
    }
    let mut data = Array2::zeros((header.n_channels, header.n_samples));
    for c in 0..header.n_channels {
        for s in 0..header.n_samples {
            let off = (c * header.n_samples + s) * 4;
            let v = f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
            data[[c, s]] = v as f64;
        }
    }
    Recording::new(
        data,
        header.fs,
        header.channel_names,
        header.events.into_iter().map(|e| Event { name: e.name, sample: e.sample }).collect(),
    )
}

pub fn write_ground_truth(base: &Path, gt: &GroundTruth) -> Result<PathBuf> {
    let path = with_ext(&base_path(base), GROUND_TRUTH_EXT);
    fs::write(&path, serde_json::to_string_pretty(gt)?)?;
    Ok(path)
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let path = if path.to_string_lossy().ends_with(GROUND_TRUTH_EXT) {
        path.to_path_buf()
    } else {
        with_ext(&base_path(path), GROUND_TRUTH_EXT)
    };
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Read the two-column target-variable CSV `(trial_index, z)`, ordered by
/// trial index. A non-numeric first line is treated as a header.
pub fn read_target_csv(path: &Path) -> Result<Vec<f64>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split(',');
        let first = parts.next().unwrap_or("").trim();
        let second = parts.next().unwrap_or("").trim();
        match (first.parse::<usize>(), second.parse::<f64>()) {
            (Ok(idx), Ok(z)) => rows.push((idx, z)),
            _ if lineno == 0 => continue, // header
            _ => {
                return Err(Error::Parse(format!(
                    "{}:{}: expected 'trial_index,z', got '{trimmed}'",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    rows.sort_by_key(|(idx, _)| *idx);
    Ok(rows.into_iter().map(|(_, z)| z).collect())
}

pub fn write_target_csv(path: &Path, z: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "trial_index,z")?;
    for (i, v) in z.iter().enumerate() {
        writeln!(w, "{i},{v}")?;
    }
    w.flush()?;
    Ok(())
}

const COMPONENTS_CSV_HEADER: &str = "index,t0,f0,df,rank_k,alpha,fold_q,eigenvalue,z_auc,p_art";

/// Persist harvest output: one CSV row per component plus a binary sidecar of
/// little-endian f64 filter and pattern vectors (one row of `2 n_channels`
/// values per component), and a skip-record CSV.
pub fn write_harvest(dir: &Path, result: &HarvestResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = BufWriter::new(fs::File::create(dir.join("components.csv"))?);
    writeln!(csv, "{COMPONENTS_CSV_HEADER}")?;
    let mut bin = BufWriter::new(fs::File::create(dir.join("components.bin"))?);
    for (i, c) in result.components.iter().enumerate() {
        let cfg = &c.config;
        writeln!(
            csv,
            "{i},{},{},{},{},{},{},{},{},{}",
            cfg.t0, cfg.f0, cfg.df, cfg.rank_k, cfg.alpha, cfg.fold_q, c.eigenvalue, c.z_auc, c.p_art
        )?;
        for &v in c.filter.iter().chain(&c.pattern) {
            bin.write_all(&v.to_le_bytes())?;
        }
    }
    csv.flush()?;
    bin.flush()?;

    let mut skips = BufWriter::new(fs::File::create(dir.join("skips.csv"))?);
    writeln!(skips, "t0,f0,df,rank_k,alpha,fold_q,reason")?;
    for s in &result.skipped {
        let cfg = &s.config;
        writeln!(
            skips,
            "{},{},{},{},{},{},\"{}\"",
            cfg.t0,
            cfg.f0,
            cfg.df,
            cfg.rank_k,
            cfg.alpha,
            cfg.fold_q,
            s.reason.replace('"', "'")
        )?;
    }
    skips.flush()?;
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad {what}: '{s}'")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad {what}: '{s}'")))
}

/// Reload a harvest from its artifacts (used for stage resume).
pub fn read_harvest(dir: &Path) -> Result<HarvestResult> {
    let csv = fs::read_to_string(dir.join("components.csv"))?;
    let mut lines = csv.lines();
    match lines.next() {
        Some(h) if h == COMPONENTS_CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected components.csv header: {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::Parse(format!("bad components.csv row: '{line}'")));
        }
        rows.push((
            ConfigPoint {
                t0: parse_f64(f[1], "t0")?,
                f0: parse_f64(f[2], "f0")?,
                df: parse_f64(f[3], "df")?,
                rank_k: parse_usize(f[4], "rank_k")?,
                alpha: parse_f64(f[5], "alpha")?,
                fold_q: parse_usize(f[6], "fold_q")?,
            },
            parse_f64(f[7], "eigenvalue")?,
            parse_f64(f[8], "z_auc")?,
            parse_f64(f[9], "p_art")?,
        ));
    }

    let mut bytes = Vec::new();
    fs::File::open(dir.join("components.bin"))?.read_to_end(&mut bytes)?;
    if rows.is_empty() {
        if !bytes.is_empty() {
            return Err(Error::Parse("components.bin non-empty for empty component list".into()));
        }
    } else if bytes.len() % (rows.len() * 16) != 0 {
        return Err(Error::Parse(format!(
            "components.bin size {} not divisible by 16 x {} rows",
            bytes.len(),
            rows.len()
        )));
    }
    let n_c = if rows.is_empty() { 0 } else { bytes.len() / (rows.len() * 16) };

    let mut components = Vec::with_capacity(rows.len());
    for (i, (config, eigenvalue, z_auc, p_art)) in rows.into_iter().enumerate() {
        let mut vals = Vec::with_capacity(2 * n_c);
        for k in 0..2 * n_c {
            let off = (i * 2 * n_c + k) * 8;
            vals.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        }
        let filter = vals[..n_c].to_vec();
        let pattern = vals[n_c..].to_vec();
        let norm: f64 = pattern.iter().map(|v| v * v).sum::<f64>().sqrt();
        let pattern_unit = if norm > 0.0 {
            pattern.iter().map(|v| v / norm).collect()
        } else {
            pattern.clone()
        };
        components.push(Component { config, filter, pattern, pattern_unit, eigenvalue, z_auc, p_art });
    }

    let mut skipped = Vec::new();
    let skips = fs::read_to_string(dir.join("skips.csv"))?;
    for line in skips.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.splitn(7, ',').collect();
        if f.len() != 7 {
            return Err(Error::Parse(format!("bad skips.csv row: '{line}'")));
        }
        skipped.push(SkipRecord {
            config: ConfigPoint {
                t0: parse_f64(f[0], "t0")?,
                f0: parse_f64(f[1], "f0")?,
                df: parse_f64(f[2], "df")?,
                rank_k: parse_usize(f[3], "rank_k")?,
                alpha: parse_f64(f[4], "alpha")?,
                fold_q: parse_usize(f[5], "fold_q")?,
            },
            reason: f[6].trim_matches('"').to_string(),
        });
    }
    Ok(HarvestResult { components, skipped })
}

/// Persist per-component envelope profiles: one row per (component, event)
/// holding the full-resolution log-envelope series.
pub fn write_profiles(path: &Path, profiles: &[(usize, &EnvelopeProfile)]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "component,event,n_epochs,samples...")?;
    for (id, p) in profiles {
        for (event, ev) in &p.events {
            write!(w, "{id},{event},{}", ev.n_epochs_averaged)?;
            for v in &ev.series {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reload profiles written by [`write_profiles`], keyed by component id.
pub fn read_profiles(path: &Path, fs_hz: f64) -> Result<std::collections::BTreeMap<usize, EnvelopeProfile>> {
    let content = fs::read_to_string(path)?;
    let mut out: std::collections::BTreeMap<usize, EnvelopeProfile> = std::collections::BTreeMap::new();
    for line in content.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parse_usize(parts.next().unwrap_or(""), "component id")?;
        let event = parts.next().ok_or_else(|| Error::Parse("missing event".into()))?.to_string();
        let n_epochs = parse_usize(parts.next().unwrap_or(""), "epoch count")?;
        let series: Result<Vec<f64>> = parts.map(|s| parse_f64(s, "sample")).collect();
        let profile = out
            .entry(id)
            .or_insert_with(|| EnvelopeProfile { fs: fs_hz, ..Default::default() });
        profile
            .events
            .insert(event, EventProfile { series: series?, n_epochs_averaged: n_epochs });
    }
    Ok(out)
}

/// Feature rows as CSV, one line per component: id then the 12 features.
pub fn write_features(path: &Path, ids: &[usize], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let dim = rows.first().map(|r| r.len()).unwrap_or(0);
    write!(w, "component")?;
    for d in 0..dim {
        write!(w, ",e{d}")?;
    }
    writeln!(w)?;
    for (id, row) in ids.iter().zip(rows) {
        write!(w, "{id}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let content = fs::read_to_string(path)?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for line in content.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        ids.push(parse_usize(parts.next().unwrap_or(""), "component id")?);
        let row: Result<Vec<f64>> = parts.map(|s| parse_f64(s, "feature")).collect();
        rows.push(row?);
    }
    Ok((ids, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Band;
    use crate::synth::{generate_recording, GeneratorSpec, PlantedSource};
    use std::collections::BTreeMap;
    use tempfile::tempdir;

    fn small_recording() -> Recording {
        let data = Array2::from_shape_fn((3, 100), |(c, s)| (c as f64 + 1.0) * (s as f64 * 0.1).sin());
        Recording::new(
            data,
            250.0,
            vec!["C00".into(), "C01".into(), "C02".into()],
            vec![
                Event { name: "go-cue".into(), sample: 10 },
                Event { name: "hit1".into(), sample: 50 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn recording_round_trip_is_f32_exact() {
        let dir = tempdir().unwrap();
        let rec = small_recording();
        let base = dir.path().join("demo");
        write_recording(&base, &rec).unwrap();
        let back = read_recording(&base).unwrap();
        assert_eq!(back.fs(), rec.fs());
        assert_eq!(back.channel_names(), rec.channel_names());
        assert_eq!(back.events(), rec.events());
        for (a, b) in rec.data().iter().zip(back.data().iter()) {
            assert_eq!(*a as f32, *b as f32);
            assert_eq!(*b, (*a as f32) as f64);
        }
        // reading via the header path works too
        let via_header = read_recording(&dir.path().join("demo.oschdr.json")).unwrap();
        assert_eq!(via_header.data(), back.data());
    }

    #[test]
    fn recording_write_is_deterministic() {
        let dir = tempdir().unwrap();
        let rec = small_recording();
        write_recording(&dir.path().join("a"), &rec).unwrap();
        write_recording(&dir.path().join("b"), &rec).unwrap();
        let a = fs::read(dir.path().join("a.oscdat")).unwrap();
        let b = fs::read(dir.path().join("b.oscdat")).unwrap();
        assert_eq!(a, b);
        let ah = fs::read(dir.path().join("a.oschdr.json")).unwrap();
        let bh = fs::read(dir.path().join("b.oschdr.json")).unwrap();
        assert_eq!(ah, bh);
    }

    #[test]
    fn ground_truth_round_trip() {
        let dir = tempdir().unwrap();
        let spec = GeneratorSpec {
            n_channels: 4,
            fs: 200.0,
            n_trials: 3,
            event_schedule: Default::default(),
            sources: vec![PlantedSource {
                band: Band::new(10.0, 4.0),
                pattern: crate::synth::unit_pattern(&[1.0, 0.5, -0.5, 0.25]),
                envelope_profile: BTreeMap::new(),
                comodulation_strength: 0.8,
                base_amplitude: 1.0,
                modulation_depth: 0.5,
            }],
            noise_level: 0.1,
            seed: 7,
        };
        let (_, gt) = generate_recording(&spec).unwrap();
        let base = dir.path().join("demo");
        write_ground_truth(&base, &gt).unwrap();
        let back = read_ground_truth(&base).unwrap();
        assert_eq!(back.z, gt.z);
        assert_eq!(back.powers, gt.powers);
        assert_eq!(back.sources.len(), 1);
        assert_eq!(back.sources[0].pattern, gt.sources[0].pattern);
    }

    #[test]
    fn target_csv_round_trip_and_ordering() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("z.csv");
        write_target_csv(&path, &[0.5, -1.25, 3.0]).unwrap();
        assert_eq!(read_target_csv(&path).unwrap(), vec![0.5, -1.25, 3.0]);

        // out-of-order rows are sorted by trial index
        fs::write(&path, "trial_index,z\n2,30.0\n0,10.0\n1,20.0\n").unwrap();
        assert_eq!(read_target_csv(&path).unwrap(), vec![10.0, 20.0, 30.0]);

        fs::write(&path, "0,1.0\nnot,a,number\n").unwrap();
        assert!(read_target_csv(&path).is_err());
    }

    #[test]
    fn harvest_round_trip() {
        let dir = tempdir().unwrap();
        let result = HarvestResult {
            components: vec![Component {
                config: ConfigPoint { t0: -0.75, f0: 10.5, df: 4.0, rank_k: 2, alpha: 1e-6, fold_q: 3 },
                filter: vec![0.1, -0.2, 0.3],
                pattern: vec![1.0, 2.0, -3.0],
                pattern_unit: crate::synth::unit_pattern(&[1.0, 2.0, -3.0]),
                eigenvalue: 0.0123,
                z_auc: 0.731,
                p_art: 1e-6,
            }],
            skipped: vec![SkipRecord {
                config: ConfigPoint { t0: -1.0, f0: 1.0, df: 2.0, rank_k: 1, alpha: 1e-8, fold_q: 1 },
                reason: "invalid band: lower edge 0.000 Hz must be > 0 (f0 1, df 2)".into(),
            }],
        };
        write_harvest(dir.path(), &result).unwrap();
        let back = read_harvest(dir.path()).unwrap();
        assert_eq!(back.components.len(), 1);
        let (a, b) = (&back.components[0], &result.components[0]);
        assert_eq!(a.config, b.config);
        assert_eq!(a.filter, b.filter);
        assert_eq!(a.pattern, b.pattern);
        assert_eq!(a.eigenvalue, b.eigenvalue);
        assert_eq!(a.z_auc, b.z_auc);
        for (x, y) in a.pattern_unit.iter().zip(&b.pattern_unit) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(back.skipped.len(), 1);
        assert_eq!(back.skipped[0].config, result.skipped[0].config);
    }

    #[test]
    fn profiles_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("profiles.csv");
        let mut p = EnvelopeProfile { fs: 250.0, ..Default::default() };
        p.events.insert(
            "go-cue".into(),
            EventProfile { series: vec![0.5, -0.25, 0.125], n_epochs_averaged: 7 },
        );
        p.events.insert(
            "hit3".into(),
            EventProfile { series: vec![1.0, 2.0, 3.0], n_epochs_averaged: 7 },
        );
        write_profiles(&path, &[(42, &p)]).unwrap();
        let back = read_profiles(&path, 250.0).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[&42].events["go-cue"].series, vec![0.5, -0.25, 0.125]);
        assert_eq!(back[&42].events["hit3"].n_epochs_averaged, 7);
    }

    #[test]
    fn features_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let ids = vec![3usize, 11];
        let rows = vec![vec![0.1; 12], vec![-2.5; 12]];
        write_features(&path, &ids, &rows).unwrap();
        let (back_ids, back_rows) = read_features(&path).unwrap();
        assert_eq!(back_ids, ids);
        assert_eq!(back_rows, rows);
    }
}
