use wsilrma::io::experiment::CSV_HEADER;
use wsilrma::io::{run_experiment, Condition, ExperimentPlan};
use wsilrma::{Backend, SeparatorConfig, StftConfig, Window};

fn small_plan(dir: &std::path::Path) -> ExperimentPlan {
    ExperimentPlan {
        conditions: vec![Condition::Wide.into()],
        eta_grid: vec![30.0],
        t60_grid: vec![0.0],
        n_mixtures: 1,
        backends: vec![Backend::Auxiva, Backend::Wsilrma],
        duration: 1.0,
        sample_rate: 8000,
        stft: StftConfig::new(256, 128, Window::SqrtHann).unwrap(),
        separator: SeparatorConfig { outer_iters: 5, rank: 2, ..Default::default() },
        eval_filter_len: 32,
        output_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn grid_run_writes_results_and_resumes_without_recomputing() {
    let dir = tempfile::tempdir().unwrap();
    let plan = small_plan(dir.path());
    let first = run_experiment(&plan).unwrap();
    assert_eq!(first.computed, 2);
    assert_eq!(first.skipped, 0);
    assert!(first.rows.iter().all(|r| r.error.is_none() && r.sir.len() == 2));

    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), 4, "one line per (job, source)");
    assert!(dir.path().join("results.json").exists());

    let second = run_experiment(&plan).unwrap();
    assert_eq!((second.computed, second.skipped), (0, 2));
    assert_eq!(std::fs::read_to_string(dir.path().join("results.csv")).unwrap(), csv);

    let mut wider = plan.clone();
    wider.eta_grid = vec![30.0, 100.0];
    let third = run_experiment(&wider).unwrap();
    assert_eq!((third.computed, third.skipped), (1, 2));
}

#[test]
fn fresh_run_ignores_previous_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = small_plan(dir.path());
    plan.backends = vec![Backend::Auxiva];
    run_experiment(&plan).unwrap();
    plan.resume = false;
    assert_eq!(run_experiment(&plan).unwrap().computed, 1);
}

#[test]
fn invalid_plans_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for tweak in [
        |p: &mut ExperimentPlan| p.n_mixtures = 0,
        |p: &mut ExperimentPlan| p.eta_grid = vec![-1.0],
        |p: &mut ExperimentPlan| p.t60_grid = vec![-0.2],
        |p: &mut ExperimentPlan| p.backends.clear(),
    ] {
        let mut plan = small_plan(dir.path());
        tweak(&mut plan);
        assert!(run_experiment(&plan).is_err());
    }
}
