use temprel::corpus::LabelSchema;
use temprel::eval::{predictions_from_records, read_predictions, score, sweep_report, write_predictions};
use temprel::experiment::{run_grid, run_sieve, run_sweep, ExperimentData, ModelKind, RunConfig};
use temprel::model::{evaluate, PairClassifier};
use temprel::pairgen::eval_pairs;
use temprel::sieve::{run_cascade, ConnectiveSieve, Sieve, SieveContext, TenseAdjacencySieve};

const CONFIG: &str = r#"
seed = 11
[corpus]
synthetic_stories = 24
synthetic_seed = 6
split_sizes = [14, 4, 6]
[embedding]
dim = 12
[train]
max_epochs = 4
patience = 2
[grid]
hidden_size = [6]
lr = [0.005]
"#;

fn config() -> RunConfig {
    RunConfig::from_toml(CONFIG).unwrap()
}

#[test]
fn checkpoint_and_prediction_dump_replay_the_test_score() {
    let cfg = config();
    let data = ExperimentData::load(&cfg).unwrap();
    let outcome = run_grid(&cfg, &data).unwrap();
    let test_set = data.pairs(&data.split.test);

    let restored = PairClassifier::from_checkpoint(&outcome.model.to_checkpoint()).unwrap();
    let (report, records) = evaluate(&restored, &test_set, &data.word, false).unwrap();
    assert_eq!(report, outcome.result.test);
    assert_eq!(records, outcome.predictions);

    let dumped = write_predictions(&records);
    let preds = predictions_from_records(&read_predictions(&dumped).unwrap(), &data.schema).unwrap();
    let replayed = score(&preds, &test_set, &data.schema, false).unwrap();
    assert_eq!(replayed.to_json(), outcome.result.test.to_json());
}

#[test]
fn cv_selection_runs_without_a_dev_split() {
    let mut cfg = config();
    cfg.mode = temprel::experiment::SelectionMode::Cv;
    cfg.folds = 3;
    cfg.corpus.split_sizes = Some([18, 0, 6]);
    cfg.grid.neg_ratio = vec![0.5, 1.0];
    let data = ExperimentData::load(&cfg).unwrap();
    let result = run_grid(&cfg, &data).unwrap().result;
    assert_eq!(result.points.len(), 2);
    for p in &result.points {
        assert_eq!(p.fold_f1.len(), 3);
        let mean = p.fold_f1.iter().sum::<f64>() / 3.0;
        assert!((mean - p.score).abs() < 1e-12);
    }
    let best = result.points.iter().map(|p| p.score).fold(f64::MIN, f64::max);
    assert_eq!(result.points[result.best].score, best);
}

#[test]
fn sweep_reports_one_row_per_ratio() {
    let cfg = config();
    let data = ExperimentData::load(&cfg).unwrap();
    let ratios = [2.0, 0.0, 1.0, 0.5];
    let runs = run_sweep(&cfg, &data, &ratios).unwrap();
    let report = sweep_report(&runs).unwrap();
    let got: Vec<f64> = report.rows.iter().map(|r| r.neg_ratio).collect();
    assert_eq!(got, vec![0.0, 0.5, 1.0, 2.0]);
    assert_eq!(report.plot_data().lines().count(), 5);
    assert!(sweep_report(&[runs[0].clone(), runs[0].clone()]).is_err());
}

#[test]
fn rule_sieves_are_exact_on_rule_generated_data() {
    let mut cfg = config();
    cfg.model = ModelKind::Sieve;
    cfg.sieve.order = vec!["connective".into(), "tense_adjacency".into()];
    let data = ExperimentData::load(&cfg).unwrap();
    let outcome = run_sieve(&cfg, &data).unwrap();
    assert_eq!(outcome.report.precision, 1.0);
    assert_eq!(outcome.state.discarded, 0);
}

#[test]
fn adding_sieves_only_adds_decisions() {
    let cfg = config();
    let data = ExperimentData::load(&cfg).unwrap();
    let schema = LabelSchema::default();
    let test_set = data.pairs(&data.split.test);
    let candidates = eval_pairs(&test_set);
    let ctx = SieveContext::new(&data.docs, &schema);
    let one = run_cascade(&[&ConnectiveSieve as &dyn Sieve], &candidates, &ctx);
    let two = run_cascade(&[&ConnectiveSieve as &dyn Sieve, &TenseAdjacencySieve], &candidates, &ctx);
    assert!(two.decided.len() >= one.decided.len());
    for (k, d) in &one.decided {
        assert_eq!(two.decided.get(k), Some(d));
    }
    let full = run_sieve(&cfg, &data).unwrap();
    assert!(full.state.decided.len() >= two.decided.len());
}
