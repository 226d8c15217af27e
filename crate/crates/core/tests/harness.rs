use std::io::Write;

use dpcp::conformal::Method;
use dpcp::harness::{
    mean_sd, run_plan, ExperimentPlan, Fallback, Summary, PARTIAL_MARKER, RESULT_COLUMNS,
};
use dpcp::plan::apply_override;

fn small_plan() -> ExperimentPlan {
    let mut p = ExperimentPlan::fig1();
    p.grid = vec![300.0, 1200.0];
    p.repetitions = 6;
    p.test_size = 100;
    p.oracle_test_points = 10;
    p.seed = 99;
    p
}

fn parse_rows(text: &str) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), RESULT_COLUMNS);
    r.records().map(Result::unwrap).collect()
}

#[test]
fn summary_equals_recomputation_from_the_written_rows() {
    let plan = small_plan();
    let mut buf = Vec::new();
    let (rows, summary) = run_plan(&plan, &mut buf, 0).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let records = parse_rows(&text);
    assert_eq!(records.len(), rows.len());
    assert_eq!(records.len(), plan.grid.len() * plan.repetitions * plan.methods.len());
    assert_eq!(Summary::from_rows(&rows), summary);

    let col = |name: &str| RESULT_COLUMNS.iter().position(|c| *c == name).unwrap();
    for cell in &summary.cells {
        let pick = |name: &str| -> Vec<f64> {
            records
                .iter()
                .filter(|r| {
                    r[col("method")] == *cell.method.as_str()
                        && r[col("sweep_value")].parse::<f64>().unwrap() == cell.sweep_value
                })
                .map(|r| r[col(name)].parse::<f64>().unwrap())
                .collect()
        };
        let cov = pick("coverage");
        assert_eq!(cov.len(), cell.trials);
        assert_eq!(mean_sd(&cov), (cell.coverage_mean, cell.coverage_sd));
        let len = pick("mean_length");
        let (m, s) = mean_sd(&len);
        assert!(m == cell.length_mean || (m.is_nan() && cell.length_mean.is_nan()));
        assert!(s == cell.length_sd || (s.is_nan() && cell.length_sd.is_nan()));
    }
}

#[test]
fn rows_do_not_depend_on_worker_count() {
    let plan = small_plan();
    let mut a = Vec::new();
    let mut b = Vec::new();
    run_plan(&plan, &mut a, 1).unwrap();
    run_plan(&plan, &mut b, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn coverage_and_flags_are_sane() {
    let (rows, summary) = run_plan(&small_plan(), std::io::sink(), 0).unwrap();
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.coverage));
        assert!(r.mean_length >= 0.0);
        assert_eq!(r.infeasible, r.mean_length.is_infinite());
    }
    // Log-bins baseline is infeasible at these sizes; DPCP is feasible at 1200.
    let dpcp = summary.get(Method::Dpcp, 1200.0).unwrap();
    assert_eq!(dpcp.infeasible, 0);
    assert!(dpcp.coverage_mean > 0.8);
    assert_eq!(summary.get(Method::Pscp, 1200.0).unwrap().infeasible, 6);
    let split = summary.get(Method::Split, 1200.0).unwrap();
    assert!(split.coverage_mean > 0.8 && split.length_mean < dpcp.length_mean);
}

#[test]
fn csv_source_with_erm_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "a,b,target").unwrap();
    for i in 0..1600 {
        let a = (i as f64 * 0.37).sin() * 3.0;
        let b = (i as f64 * 0.11).cos();
        let noise = ((i * 7919) % 100) as f64 / 50.0 - 1.0;
        let y = if i % 97 == 0 { "NA".to_string() } else { (2.0 * a - b + noise).to_string() };
        writeln!(f, "{a},{b},{y}").unwrap();
    }
    drop(f);
    let mut plan = ExperimentPlan::fig1();
    for (k, v) in [
        ("data", "csv"),
        ("csv_path", path.to_str().unwrap()),
        ("response", "target"),
        ("features", "a,b"),
        ("model", "erm"),
        ("ridge", "0.05"),
        ("grid", "700"),
        ("epsilon", "2"),
        ("repetitions", "3"),
        ("methods", "split,dpcp,oracle"),
        ("oracle_test_points", "5"),
    ] {
        apply_override(&mut plan, k, v).unwrap();
    }
    plan.validate().unwrap();
    let (rows, _) = run_plan(&plan, std::io::sink(), 0).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.n == 700 && !r.infeasible));
    // Every method sees the same subsample within a repetition.
    for chunk in rows.chunks(3) {
        assert!(chunk.iter().all(|r| r.data_hash == chunk[0].data_hash));
    }
}

struct FailAfter(usize);

impl Write for FailAfter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        if self.0 == 0 {
            return Err(std::io::Error::other("disk full"));
        }
        self.0 -= 1;
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn sink_failure_aborts() {
    let mut plan = small_plan();
    plan.methods = vec![Method::Split];
    assert!(run_plan(&plan, FailAfter(1), 1).is_err());
}

#[test]
fn partial_marker_is_written_when_rows_fail() {
    struct Recorder {
        data: Vec<u8>,
        budget: usize,
    }
    impl Write for Recorder {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            if buf.starts_with(b"#") {
                self.data.extend_from_slice(buf);
                return Ok(buf.len());
            }
            if self.budget == 0 {
                return Err(std::io::Error::other("disk full"));
            }
            self.budget -= 1;
            self.data.extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }
    let mut plan = small_plan();
    plan.methods = vec![Method::Split];
    let mut rec = Recorder { data: Vec::new(), budget: 1 };
    assert!(run_plan(&plan, &mut rec, 1).is_err());
    assert!(String::from_utf8_lossy(&rec.data).contains(PARTIAL_MARKER));
}

#[test]
fn max_edge_fallback_is_finite() {
    let mut plan = small_plan();
    plan.grid = vec![150.0];
    plan.methods = vec![Method::Dpcp];
    plan.fallback = Fallback::MaxEdge;
    let (rows, _) = run_plan(&plan, std::io::sink(), 0).unwrap();
    assert!(rows.iter().all(|r| r.infeasible && r.mean_length == 30.0 && r.threshold == 15.0));
}
