use std::fs;
use std::path::Path;

use subspace_tbd::experiment::{
    export_plotdata, generate_trial, load_results, load_trials, run_grid, run_single, summarize, ExperimentConfig,
    Method,
};

fn tiny(out: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::smoke();
    config.activity.frames = 12;
    config.activity.intervals[0].end = 12;
    config.activity.intervals[1].start = 6;
    config.activity.intervals[1].end = 12;
    config.particles = vec![100];
    config.trials = 1;
    config.snr_db = vec![0.0];
    config.output_dir = out.to_path_buf();
    config
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn both_methods_share_one_data_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny(dir.path());
    let results = run_grid(&config).unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0].data_fingerprint, results[1].data_fingerprint);
    assert_ne!(results[0].method, results[1].method);
    assert_ne!(results[0].seed, results[1].seed);
    assert_eq!(load_results(dir.path()).unwrap().len(), 2);
    assert_eq!(load_trials(dir.path()).unwrap().len(), 1);
}

#[test]
fn rerun_with_same_seed_writes_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_grid(&tiny(a.path())).unwrap();
    run_grid(&tiny(b.path())).unwrap();
    for sub in ["results", "trials"] {
        assert_eq!(read_tree(&a.path().join(sub)), read_tree(&b.path().join(sub)), "{sub}");
    }
    assert_eq!(fs::read(a.path().join("index.csv")).unwrap(), fs::read(b.path().join("index.csv")).unwrap());

    let mut other = tiny(b.path());
    other.master_seed += 1;
    other.output_dir = b.path().join("other");
    let changed = run_grid(&other).unwrap();
    let original = load_results(a.path()).unwrap();
    assert_ne!(changed[0].data_fingerprint, original[0].data_fingerprint);
}

#[test]
fn interrupted_grid_resumes_from_cached_cells() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny(dir.path());
    let first = run_grid(&config).unwrap();
    let stamp = fs::metadata(dir.path().join("results").join("subspace_snr0_np100_t0.json"))
        .unwrap()
        .modified()
        .unwrap();
    let second = run_grid(&config).unwrap();
    let strip = |rs: Vec<subspace_tbd::experiment::RunResult>| {
        rs.into_iter()
            .map(|mut r| {
                r.wall_clock_seconds = None;
                r
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(first), strip(second));
    let again = fs::metadata(dir.path().join("results").join("subspace_snr0_np100_t0.json"))
        .unwrap()
        .modified()
        .unwrap();
    assert_eq!(stamp, again);
}

#[test]
fn export_writes_one_trajectory_per_run_and_the_grid_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny(&dir.path().join("run"));
    config.trials = 2;
    config.snr_db = vec![-5.0, 5.0];
    let results = run_grid(&config).unwrap();
    let trials = load_trials(&config.output_dir).unwrap();
    let data = generate_trial(&config, 0, 0).unwrap();
    let (_, output) = run_single(&config, &data, Method::Subspace, 100, true).unwrap();
    let dumps = vec![("subspace_snr-5_np100_t0".to_string(), output.particles.unwrap())];
    let files = export_plotdata(&results, &dumps, &trials, &dir.path().join("plots")).unwrap();
    assert_eq!(files.trajectories.len(), 8);
    assert_eq!(files.particles.len(), 1);

    let grid = fs::read_to_string(&files.rmse_grid).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines[0], "method,snr_db,n_particles,trial_0,trial_1");
    assert_eq!(lines.len(), 1 + 2 * 2);

    // Slot 1 appears from its start frame onward only.
    let traj = fs::read_to_string(files.trajectories[0].clone()).unwrap();
    let slot1: Vec<usize> = traj
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some("1"))
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(slot1, (6..12).collect::<Vec<_>>());

    let summary = summarize(&results);
    assert_eq!(summary.cells.len(), 4);
    assert!(summary.text_table().contains("Prop."));
}
