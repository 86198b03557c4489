//! Batch orchestration: harvest, denoising selection, envelope features,
//! clustering runs and validation reports, with per-stage artifacts, a
//! machine-readable run manifest and stage-level resume.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::HeuristicArtifactScorer;
use crate::cluster::{clustering_runs, ClusteringRun, DEFAULT_N_REPS, DEFAULT_RUN_SIZE, DEFAULT_S_HOM};
use crate::envelope::{
    assemble_features, log_envelope_timecourse, profile_from_timecourse, EnvelopeProfile,
    D_RED, N_SUBSAMPLES,
};
use crate::error::{Error, Result};
use crate::io;
use crate::signal::{bandpass_filter, Band, Recording};
use crate::sweep::{default_space, harvest, select_components, Component, SweepSpace};
use crate::validate::{cluster_report, scatter_data, ClusterInputs, ClusterReport};

fn default_training_event() -> String {
    "go-cue".to_string()
}

fn default_zauc_min() -> f64 {
    0.6
}

fn default_p_art_max() -> f64 {
    1e-5
}

fn default_n_samples() -> usize {
    DEFAULT_RUN_SIZE
}

fn default_n_reps() -> usize {
    DEFAULT_N_REPS
}

fn default_s_hom() -> f64 {
    DEFAULT_S_HOM
}

fn default_clustering_events() -> Vec<String> {
    ["get-ready", "go-cue", "hit3", "hit4"].iter().map(|s| s.to_string()).collect()
}

fn default_validation_events() -> Vec<String> {
    ["get-ready", "go-cue", "hit1", "hit2", "hit3", "hit4"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_scatter_events() -> [String; 2] {
    ["get-ready".to_string(), "hit4".to_string()]
}

/// Full pipeline configuration; every field has a default except the input
/// paths and output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Recording base path (or header path).
    pub recording: PathBuf,
    /// Target-variable CSV path.
    pub target: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_training_event")]
    pub training_event: String,
    #[serde(default = "default_space")]
    pub space: SweepSpace,
    #[serde(default = "default_zauc_min")]
    pub zauc_min: f64,
    #[serde(default = "default_p_art_max")]
    pub p_art_max: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_n_reps")]
    pub n_reps: usize,
    #[serde(default = "default_s_hom")]
    pub s_hom: f64,
    #[serde(default = "default_clustering_events")]
    pub clustering_events: Vec<String>,
    #[serde(default = "default_validation_events")]
    pub validation_events: Vec<String>,
    #[serde(default = "default_scatter_events")]
    pub scatter_events: [String; 2],
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for the parallel stages; 0 uses the global default.
    #[serde(default)]
    pub workers: usize,
    /// Reuse existing stage artifacts in `out_dir` when present.
    #[serde(default)]
    pub resume: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("zauc_min", self.zauc_min), ("p_art_max", self.p_art_max)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.recording.as_os_str().is_empty()
            || self.target.as_os_str().is_empty()
            || self.out_dir.as_os_str().is_empty()
        {
            return Err(Error::InvalidParameter("recording, target and out_dir are required".into()));
        }
        if self.clustering_events.is_empty() {
            return Err(Error::InvalidParameter("clustering event set is empty".into()));
        }
        Ok(())
    }
}

/// Per-run statistics recorded in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub n_samples: usize,
    pub epsilon: f64,
    pub n_hom: usize,
    pub n_clusters: usize,
    pub n_outliers: usize,
    pub note: Option<String>,
}

/// Machine-readable record of one pipeline execution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub n_configs: usize,
    pub n_components: usize,
    pub n_skipped: usize,
    pub n_selected: usize,
    pub selection_fraction: f64,
    pub n_trials: usize,
    pub validation_events_used: Vec<String>,
    pub runs: Vec<RunSummary>,
    /// Wall-clock stage durations; the only non-deterministic manifest field.
    pub timings_ms: BTreeMap<String, u128>,
}

struct Stages<'a> {
    config: &'a PipelineConfig,
    recording: Recording,
    z: Vec<f64>,
    timings: BTreeMap<String, u128>,
}

fn band_key(band: Band) -> (u64, u64) {
    (band.f0.to_bits(), band.df.to_bits())
}

impl<'a> Stages<'a> {
    fn harvest_stage(&mut self) -> Result<crate::sweep::HarvestResult> {
        let dir = self.config.out_dir.join("harvest");
        if self.config.resume && dir.join("components.csv").exists() {
            if let Ok(result) = io::read_harvest(&dir) {
                self.timings.insert("harvest".into(), 0);
                return Ok(result);
            }
        }
        let t = Instant::now();
        let scorer = HeuristicArtifactScorer::default();
        let result = harvest(
            &self.recording,
            &self.z,
            &self.config.space,
            &self.config.training_event,
            &scorer,
        )?;
        io::write_harvest(&dir, &result)?;
        self.timings.insert("harvest".into(), t.elapsed().as_millis());
        Ok(result)
    }

    fn profile_events(&self) -> Result<Vec<String>> {
        let present: Vec<String> = self.recording.event_names();
        for ev in &self.config.clustering_events {
            if !present.iter().any(|p| p == ev) {
                return Err(Error::MissingEvent(format!(
                    "clustering event '{ev}' not present in recording"
                )));
            }
        }
        let mut events: Vec<String> = self
            .config
            .validation_events
            .iter()
            .filter(|e| present.iter().any(|p| &p == e))
            .cloned()
            .collect();
        for ev in &self.config.clustering_events {
            if !events.contains(ev) {
                events.push(ev.clone());
            }
        }
        Ok(events)
    }

    fn envelope_stage(
        &mut self,
        components: &[Component],
        selected: &[usize],
        events: &[String],
    ) -> Result<BTreeMap<usize, EnvelopeProfile>> {
        let path = self.config.out_dir.join("profiles.csv");
        if self.config.resume && path.exists() {
            if let Ok(profiles) = io::read_profiles(&path, self.recording.fs()) {
                if selected.iter().all(|id| profiles.contains_key(id)) {
                    self.timings.insert("envelopes".into(), 0);
                    return Ok(profiles);
                }
            }
        }
        let t = Instant::now();
        // group selected components by band so each band is filtered once
        let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
        for &id in selected {
            groups.entry(band_key(components[id].config.band())).or_default().push(id);
        }
        let group_list: Vec<(Band, Vec<usize>)> = groups
            .into_values()
            .map(|ids| (components[ids[0]].config.band(), ids))
            .collect();

        let per_group: Vec<Result<Vec<(usize, EnvelopeProfile)>>> = group_list
            .par_iter()
            .map(|(band, ids)| {
                let filtered = bandpass_filter(&self.recording, *band)?;
                let mut out = Vec::with_capacity(ids.len());
                for &id in ids {
                    let log_env = log_envelope_timecourse(&filtered, &components[id].filter)?;
                    out.push((id, profile_from_timecourse(&log_env, &self.recording, events)));
                }
                Ok(out)
            })
            .collect();

        let mut profiles = BTreeMap::new();
        for group in per_group {
            for (id, p) in group? {
                profiles.insert(id, p);
            }
        }
        let rows: Vec<(usize, &EnvelopeProfile)> = profiles.iter().map(|(&id, p)| (id, p)).collect();
        io::write_profiles(&path, &rows)?;
        self.timings.insert("envelopes".into(), t.elapsed().as_millis());
        Ok(profiles)
    }
}

/// Execute the full pipeline and write all artifacts under `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
        pool.install(|| run_pipeline_inner(config))
    } else {
        run_pipeline_inner(config)
    }
}

fn run_pipeline_inner(config: &PipelineConfig) -> Result<RunManifest> {
    let recording = io::read_recording(&config.recording)?;
    let z = io::read_target_csv(&config.target)?;
    let n_occ = recording.event_samples(&config.training_event).len();
    if n_occ == 0 {
        return Err(Error::MissingEvent(config.training_event.clone()));
    }
    if z.len() != n_occ {
        return Err(Error::DimensionMismatch(format!(
            "{} target values for {} '{}' occurrences",
            z.len(),
            n_occ,
            config.training_event
        )));
    }
    fs::create_dir_all(&config.out_dir)?;

    let mut stages = Stages { config, recording, z, timings: BTreeMap::new() };

    // stage 1: harvest across the grid
    let harvest_result = stages.harvest_stage()?;

    // stage 2: denoising selection
    let selection = select_components(&harvest_result.components, config.zauc_min, config.p_art_max)?;
    {
        let mut w = BufWriter::new(fs::File::create(config.out_dir.join("selected.csv"))?);
        writeln!(w, "component")?;
        for &id in &selection.indices {
            writeln!(w, "{id}")?;
        }
        w.flush()?;
    }
    if selection.indices.is_empty() {
        return Err(Error::InsufficientData(
            "no components survived the selection gate".into(),
        ));
    }

    // stage 3: envelope profiles and clustering features
    let events = stages.profile_events()?;
    let profiles = stages.envelope_stage(&harvest_result.components, &selection.indices, &events)?;

    let t = Instant::now();
    let ordered_profiles: Vec<EnvelopeProfile> =
        selection.indices.iter().map(|id| profiles[id].clone()).collect();
    let features =
        assemble_features(&ordered_profiles, &config.clustering_events, N_SUBSAMPLES, D_RED)?;
    io::write_features(&config.out_dir.join("features.csv"), &selection.indices, &features.rows)?;
    stages.timings.insert("features".into(), t.elapsed().as_millis());

    // stage 4: clustering runs
    let t = Instant::now();
    let runs = clustering_runs(&features.rows, config.n_samples, config.n_reps, config.seed)?;
    write_clustering_artifacts(config, &harvest_result.components, &selection.indices, &runs)?;
    stages.timings.insert("clustering".into(), t.elapsed().as_millis());

    // stage 5: validation reports
    let t = Instant::now();
    let reports = build_reports(
        config,
        &harvest_result.components,
        &selection.indices,
        &features.rows,
        &profiles,
        &runs,
        &events,
    )?;
    write_validation_artifacts(config, &events, &reports)?;
    stages.timings.insert("validation".into(), t.elapsed().as_millis());

    let manifest = RunManifest {
        config: config.clone(),
        n_configs: config.space.cardinality(),
        n_components: harvest_result.components.len(),
        n_skipped: harvest_result.skipped.len(),
        n_selected: selection.indices.len(),
        selection_fraction: selection.fraction,
        n_trials: stages.z.len(),
        validation_events_used: events,
        runs: runs
            .iter()
            .enumerate()
            .map(|(r, run)| RunSummary {
                run: r,
                n_samples: run.indices.len(),
                epsilon: run.epsilon,
                n_hom: run.result.n_hom,
                n_clusters: run.result.n_clusters,
                n_outliers: run.result.n_outliers(),
                note: run.result.note.clone(),
            })
            .collect(),
        timings_ms: stages.timings,
    };
    fs::write(
        config.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

fn write_clustering_artifacts(
    config: &PipelineConfig,
    components: &[Component],
    selected: &[usize],
    runs: &[ClusteringRun],
) -> Result<()> {
    let dir = config.out_dir.join("clustering");
    fs::create_dir_all(&dir)?;
    let mut samples = BufWriter::new(fs::File::create(dir.join("runs.csv"))?);
    writeln!(
        samples,
        "run,component,t0,f0,df,rank_k,alpha,fold_q,label,core,silhouette"
    )?;
    for (r, run) in runs.iter().enumerate() {
        for (local, &row) in run.indices.iter().enumerate() {
            let comp = &components[selected[row]];
            let cfg = &comp.config;
            writeln!(
                samples,
                "{r},{},{},{},{},{},{},{},{},{},{}",
                selected[row],
                cfg.t0,
                cfg.f0,
                cfg.df,
                cfg.rank_k,
                cfg.alpha,
                cfg.fold_q,
                run.result.labels[local],
                u8::from(run.result.core_flags[local]),
                run.result.silhouettes[local]
            )?;
        }
    }
    samples.flush()?;

    let mut summary = BufWriter::new(fs::File::create(dir.join("summary.csv"))?);
    writeln!(summary, "run,epsilon,n_hom,n_clusters,outlier_fraction")?;
    for (r, run) in runs.iter().enumerate() {
        let n = run.indices.len().max(1);
        writeln!(
            summary,
            "{r},{},{},{},{}",
            run.epsilon,
            run.result.n_hom,
            run.result.n_clusters,
            run.result.n_outliers() as f64 / n as f64
        )?;
    }
    summary.flush()?;
    Ok(())
}

fn build_reports(
    config: &PipelineConfig,
    components: &[Component],
    selected: &[usize],
    feature_rows: &[Vec<f64>],
    profiles: &BTreeMap<usize, EnvelopeProfile>,
    runs: &[ClusteringRun],
    events: &[String],
) -> Result<Vec<(usize, ClusterReport)>> {
    let _ = config;
    let mut reports = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        for cluster in 0..run.result.n_clusters as i64 {
            let locals = run.result.cluster_members(cluster);
            if locals.is_empty() {
                continue;
            }
            let global_ids: Vec<usize> =
                locals.iter().map(|&l| selected[run.indices[l]]).collect();
            let inputs = ClusterInputs {
                cluster_id: cluster,
                members: global_ids.clone(),
                feature_rows: locals.iter().map(|&l| feature_rows[run.indices[l]].clone()).collect(),
                patterns: global_ids.iter().map(|&g| components[g].pattern_unit.clone()).collect(),
                f0_values: global_ids.iter().map(|&g| components[g].config.f0).collect(),
                z_aucs: global_ids.iter().map(|&g| components[g].z_auc).collect(),
                p_arts: global_ids.iter().map(|&g| components[g].p_art).collect(),
                profiles: global_ids.iter().map(|&g| &profiles[&g]).collect(),
                silhouettes: locals.iter().map(|&l| run.result.silhouettes[l]).collect(),
            };
            reports.push((r, cluster_report(&inputs, events)?));
        }
    }
    Ok(reports)
}

fn write_validation_artifacts(
    config: &PipelineConfig,
    events: &[String],
    reports: &[(usize, ClusterReport)],
) -> Result<()> {
    let dir = config.out_dir.join("validation");
    fs::create_dir_all(&dir)?;

    let mut w = BufWriter::new(fs::File::create(dir.join("cluster_reports.csv"))?);
    write!(
        w,
        "run,cluster,size,mean_silhouette,min_silhouette,ic_mse,icph_deg,f0_std_hz,representative,mean_z_auc,mean_p_art"
    )?;
    for e in events {
        write!(w, ",dphi_{e}")?;
    }
    writeln!(w)?;
    for (r, report) in reports {
        write!(
            w,
            "{r},{},{},{},{},{},{},{},{},{},{}",
            report.cluster_id,
            report.size,
            report.mean_silhouette,
            report.min_silhouette,
            report.ic_mse,
            report.icph_deg,
            report.f0_std_hz,
            report.representative,
            report.mean_z_auc,
            report.mean_p_art
        )?;
        for e in events {
            match report.delta_phi_max.get(e) {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()?;

    let [ev_x, ev_y] = &config.scatter_events;
    let mut s = BufWriter::new(fs::File::create(dir.join("scatter.csv"))?);
    writeln!(s, "run,cluster,dphi_{ev_x},dphi_{ev_y}")?;
    let mut by_run: BTreeMap<usize, Vec<ClusterReport>> = BTreeMap::new();
    for (r, report) in reports {
        by_run.entry(*r).or_default().push(report.clone());
    }
    for (r, run_reports) in &by_run {
        for (cluster, x, y) in scatter_data(run_reports, ev_x, ev_y) {
            writeln!(s, "{r},{cluster},{x},{y}")?;
        }
    }
    s.flush()?;
    Ok(())
}

/// Emit per-cluster envelope panel data and the scatter file from an
/// artifact directory produced by [`run_pipeline`].
///
/// One CSV per (run, cluster, event) holding every member's full-resolution
/// log-envelope series, plus `plots/scatter.csv`.
pub fn emit_plots(artifact_dir: &Path) -> Result<usize> {
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(artifact_dir.join("manifest.json"))?)?;
    let recording = io::read_recording(&manifest.config.recording)?;
    let profiles = io::read_profiles(&artifact_dir.join("profiles.csv"), recording.fs())?;

    // membership per run from the clustering CSV
    let runs_csv = fs::read_to_string(artifact_dir.join("clustering").join("runs.csv"))?;
    let mut membership: BTreeMap<(usize, i64), Vec<usize>> = BTreeMap::new();
    for line in runs_csv.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 11 {
            return Err(Error::Parse(format!("bad runs.csv row: '{line}'")));
        }
        let run: usize = f[0].parse().map_err(|_| Error::Parse("bad run id".into()))?;
        let comp: usize = f[1].parse().map_err(|_| Error::Parse("bad component id".into()))?;
        let label: i64 = f[8].parse().map_err(|_| Error::Parse("bad label".into()))?;
        if label >= 0 {
            membership.entry((run, label)).or_default().push(comp);
        }
    }

    let plots_dir = artifact_dir.join("plots");
    fs::create_dir_all(&plots_dir)?;
    let mut n_files = 0usize;
    for ((run, cluster), members) in &membership {
        for event in &manifest.validation_events_used {
            let path = plots_dir.join(format!("run{run}_c{cluster}_{event}.csv"));
            let mut w = BufWriter::new(fs::File::create(&path)?);
            writeln!(w, "component,samples...")?;
            for &m in members {
                let profile = profiles
                    .get(&m)
                    .ok_or_else(|| Error::Parse(format!("no profile for component {m}")))?;
                if let Ok(ev) = profile.event(event) {
                    write!(w, "{m}")?;
                    for v in &ev.series {
                        write!(w, ",{v}")?;
                    }
                    writeln!(w)?;
                }
            }
            w.flush()?;
            n_files += 1;
        }
    }

    fs::copy(
        artifact_dir.join("validation").join("scatter.csv"),
        plots_dir.join("scatter.csv"),
    )?;
    Ok(n_files)
}

/// Generate a synthetic recording from a generator spec and write the
/// recording pair, the ground-truth sidecar and the target CSV.
pub fn generate_synthetic(spec: &crate::synth::GeneratorSpec, base: &Path) -> Result<()> {
    let (recording, gt) = crate::synth::generate_recording(spec)?;
    if let Some(parent) = base.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    io::write_recording(base, &recording)?;
    io::write_ground_truth(base, &gt)?;
    let mut z_path = base.as_os_str().to_os_string();
    z_path.push(".z.csv");
    io::write_target_csv(Path::new(&z_path), &gt.z)?;
    Ok(())
}
