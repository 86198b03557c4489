use oscmine::pipeline::*;
use oscmine::signal::Band;
use oscmine::synth::*;
use oscmine::sweep::SweepSpace;
use std::collections::BTreeMap;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let tmp = std::env::temp_dir().join("oscmine_e2e_dbg");
    let _ = std::fs::remove_dir_all(&tmp);
    std::fs::create_dir_all(&tmp).unwrap();

    // two planted sources: 10 Hz ERD at go-cue, 22 Hz ERS at hit4
    let n_c = 8;
    let mut erd = BTreeMap::new();
    erd.insert("go-cue".to_string(), GainCurve::step(0.4, 0.0, 0.8));
    let mut ers = BTreeMap::new();
    ers.insert("hit4".to_string(), GainCurve::step(2.2, 0.0, 0.8));
    let spec = GeneratorSpec {
        n_channels: n_c,
        fs: 250.0,
        n_trials: 100,
        event_schedule: EventSchedule::default(),
        sources: vec![
            PlantedSource {
                band: Band::new(10.0, 4.0),
                pattern: unit_pattern(&[0.8, 0.5, 0.2, -0.3, 0.1, 0.0, -0.1, 0.4]),
                envelope_profile: erd,
                comodulation_strength: 0.85,
                base_amplitude: 1.0,
                modulation_depth: 0.8,
            },
            PlantedSource {
                band: Band::new(22.0, 4.0),
                pattern: unit_pattern(&[-0.2, 0.1, 0.7, 0.5, -0.4, 0.2, 0.3, -0.1]),
                envelope_profile: ers,
                comodulation_strength: 0.85,
                base_amplitude: 1.0,
                modulation_depth: 0.8,
            },
        ],
        noise_level: 0.5,
        seed: 1234,
    };
    let base = tmp.join("rec");
    generate_synthetic(&spec, &base).unwrap();
    println!("synth done {:?}", t0.elapsed());

    let config = PipelineConfig {
        recording: base.clone(),
        target: tmp.join("rec.z.csv"),
        out_dir: tmp.join("out"),
        training_event: "go-cue".into(),
        space: SweepSpace {
            t0_values: vec![-1.0, -0.75, -0.5],
            bands: oscmine::signal::band_grid(8, [6.0, 30.0], [4.0, 5.0]).unwrap(),
            rank_min: 1,
            rank_max: 3,
            alphas: vec![1e-7, 1e-5, 1e-3],
            n_folds: 5,
            dt: 1.0,
        },
        zauc_min: 0.6,
        p_art_max: 1e-5,
        n_samples: 2000,
        n_reps: 12,
        s_hom: 0.2,
        clustering_events: vec!["get-ready".into(), "go-cue".into(), "hit3".into(), "hit4".into()],
        validation_events: vec!["get-ready".into(), "go-cue".into(), "hit1".into(), "hit2".into(), "hit3".into(), "hit4".into()],
        scatter_events: ["get-ready".into(), "hit4".into()],
        seed: 99,
        workers: 0,
        resume: false,
    };
    match run_pipeline(&config) {
        Ok(m) => {
            println!("total {:?}", t0.elapsed());
            println!("configs {} components {} skipped {} selected {} ({:.1}%)",
                m.n_configs, m.n_components, m.n_skipped, m.n_selected, 100.0*m.selection_fraction);
            for r in &m.runs {
                println!("run {}: n {} eps {:.4} n_hom {} |C| {} outliers {} {:?}",
                    r.run, r.n_samples, r.epsilon, r.n_hom, r.n_clusters, r.n_outliers, r.note);
            }
            let reports = std::fs::read_to_string(config.out_dir.join("validation/cluster_reports.csv")).unwrap();
            println!("{reports}");
        }
        Err(e) => println!("PIPELINE ERROR: {e}"),
    }
}
