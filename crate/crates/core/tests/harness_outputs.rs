//! File outputs of the Monte-Carlo harness: schema, determinism, common
//! random numbers and recomputable aggregates.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use otfilter::filters::FilterVariant;
use otfilter::harness::{monte_carlo, write_outputs, ExperimentConfig, OutputFormat, SERIES_HEADER};

fn config() -> ExperimentConfig {
    ExperimentConfig { t_final: 1.0, ensemble_size: 15, runs: 3, base_seed: 11, ..Default::default() }
}

fn read_series(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), SERIES_HEADER);
    r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn csv_outputs_are_deterministic_and_recomputable() {
    let c = config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let res = monte_carlo(&c).unwrap();
    write_outputs(&res, a.path(), OutputFormat::Csv).unwrap();
    write_outputs(&monte_carlo(&c).unwrap(), b.path(), OutputFormat::Csv).unwrap();
    let files_a = dir_bytes(a.path());
    assert_eq!(files_a.len(), c.runs * 5 + 2);
    assert_eq!(files_a, dir_bytes(b.path()));

    let mut summary = csv::Reader::from_path(a.path().join("summary.csv")).unwrap();
    for rec in summary.records() {
        let rec = rec.unwrap();
        let variant: FilterVariant = rec[0].parse().unwrap();
        let reported: f64 = rec[1].parse().unwrap();
        let mut rms = Vec::new();
        let mut truth_hashes = Vec::new();
        for run in 0..c.runs {
            let rows = read_series(&a.path().join(format!("run_{run:04}_{}.csv", variant.key())));
            assert_eq!(rows.len(), c.steps());
            let ms = rows.iter().map(|r| r[9] * r[9]).sum::<f64>() / rows.len() as f64;
            rms.push(ms.sqrt());
            let mut h = DefaultHasher::new();
            for r in &rows {
                r[1].to_bits().hash(&mut h);
                r[2].to_bits().hash(&mut h);
            }
            truth_hashes.push(h.finish());
        }
        let avg = rms.iter().sum::<f64>() / rms.len() as f64;
        assert!((avg - reported).abs() <= 1e-12, "{variant}: {avg} vs {reported}");
        assert_eq!(rec[2].parse::<usize>().unwrap(), c.runs);
        assert_eq!(&rec[3], "0");
    }
}

#[test]
fn truth_series_are_shared_across_variants() {
    let c = config();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&monte_carlo(&c).unwrap(), dir.path(), OutputFormat::Csv).unwrap();
    for run in 0..c.runs {
        let hashes: Vec<u64> = FilterVariant::ALL
            .iter()
            .map(|v| {
                let rows = read_series(&dir.path().join(format!("run_{run:04}_{}.csv", v.key())));
                let mut h = DefaultHasher::new();
                for r in &rows {
                    (r[0].to_bits(), r[1].to_bits(), r[2].to_bits()).hash(&mut h);
                }
                h.finish()
            })
            .collect();
        assert!(hashes.windows(2).all(|w| w[0] == w[1]), "run {run}: {hashes:?}");
    }
}

#[test]
fn json_summary_has_one_object_per_variant() {
    let c = ExperimentConfig { runs: 1, ..config() };
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&monte_carlo(&c).unwrap(), dir.path(), OutputFormat::Json).unwrap();
    let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let summary: Vec<serde_json::Map<String, serde_json::Value>> = serde_json::from_str(&text).unwrap();
    assert_eq!(summary.len(), 5);
    for obj in &summary {
        let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 4);
        for k in ["variant", "avg_rms_constraint_error", "runs_used", "runs_failed"] {
            assert!(obj.contains_key(k), "{k}");
        }
    }
    let echoed = ExperimentConfig::load(&dir.path().join("config.json")).unwrap();
    assert_eq!(echoed, c);
}

#[test]
fn unwritable_directory_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let res = monte_carlo(&ExperimentConfig { runs: 1, t_final: 0.1, ..config() }).unwrap();
    let err = write_outputs(&res, &blocker.join("sub"), OutputFormat::Csv).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}
