use std::path::Path;
use std::process::{Command, Output};

use mdp_metrics::{bisimulation_partition, Mdp};
use mdp_metrics_cli::format::{parse_mdp, read_distances, read_mdp};

fn run<P: AsRef<Path>>(dir: P, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdp-metrics"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn value_column(csv: &str) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn gen_grid_writes_25_states() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&dir, &["gen", "grid", "5", "5", "-o", "g.json"]);
    assert_eq!(code(&out), 0, "{out:?}");
    let m = read_mdp(&dir.path().join("g.json")).unwrap();
    assert_eq!(m.n_states(), 25);
    assert_eq!(m.n_actions(), 5);
}

#[test]
fn gen_branching_with_equal_branches_is_one_block() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["gen", "figure1", "--p", "0.4", "--q", "0.4", "--rv", "0"],
    );
    assert_eq!(code(&out), 0);
    let m = parse_mdp(&stdout(&out)).unwrap();
    assert_eq!(bisimulation_partition(&m, 0.0).len(), 1);
}

#[test]
fn gen_random_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "gen",
        "random",
        "--states",
        "6",
        "--actions",
        "2",
        "--seed",
        "9",
        "--branching",
        "3",
    ];
    let a = stdout(&run(&dir, &args));
    let b = stdout(&run(&dir, &args));
    assert_eq!(a, b);
    assert_eq!(parse_mdp(&a).unwrap().n_states(), 6);
}

#[test]
fn gen_rejects_bad_flags_as_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &dir,
        &[
            "gen",
            "random",
            "--states",
            "3",
            "--seed",
            "1",
            "--branching",
            "4",
        ],
    );
    assert_eq!(code(&out), 1);
    assert_eq!(code(&run(&dir, &["gen", "grid", "five", "5"])), 1);
    assert_eq!(code(&run(&dir, &["frobnicate"])), 1);
    assert_eq!(code(&run(&dir, &["--help"])), 0);
}

fn write(dir: &Path, name: &str, mdp: &Mdp) -> String {
    let path = dir.join(name);
    mdp_metrics_cli::format::write_mdp(mdp, &path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_single_state() {
    let dir = tempfile::tempdir().unwrap();
    let one = Mdp::new(1, vec!["a".into()], vec![1.0], vec![1.0], None).unwrap();
    let path = write(dir.path(), "one.json", &one);
    let out = run(
        &dir,
        &["solve", &path, "--gamma", "0.5", "--epsilon", "1e-10"],
    );
    assert_eq!(code(&out), 0);
    let v = value_column(&stdout(&out));
    assert!((v[0] - 2.0).abs() < 1e-9);
}

#[test]
fn solve_writes_values_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "f.json",
        &mdp_metrics::gen_figure1(0.25, 0.5, 1.0).unwrap(),
    );
    let out = run(
        &dir,
        &[
            "solve",
            &path,
            "--gamma",
            "0.5",
            "--epsilon",
            "1e-10",
            "-o",
            "v.csv",
            "--policy",
            "p.csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let v = value_column(&std::fs::read_to_string(dir.path().join("v.csv")).unwrap());
    // V(s) = 1 - p, V(t) = 1 - q, V(u) = 0, V(v) = 2 at gamma = 1/2.
    for (got, want) in v.iter().zip([0.75, 0.5, 0.0, 2.0]) {
        assert!((got - want).abs() < 1e-9);
    }
    let policy = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(policy.lines().next(), Some("state_index,action_index"));
    assert_eq!(policy.lines().count(), 5);
}

#[test]
fn solve_rejects_invalid_documents() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"version": 1, "n_states": 1, "actions": ["a"], "rewards": [[0.0]], "transitions": [[[0.5]]]}"#,
    )
    .unwrap();
    let out = run(&dir, &["solve", "bad.json", "--gamma", "0.5"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row-sum"));
    assert_eq!(
        code(&run(&dir, &["solve", "missing.json", "--gamma", "0.5"])),
        2
    );
    let path = write(dir.path(), "ok.json", &mdp_metrics::gen_grid(2, 2).unwrap());
    assert_eq!(code(&run(&dir, &["solve", &path, "--gamma", "1.5"])), 1);
}

#[test]
fn metric_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let (p, q, r, gamma) = (0.2, 0.7, 0.8, 0.5);
    let path = write(
        dir.path(),
        "f.json",
        &mdp_metrics::gen_figure1(p, q, r).unwrap(),
    );
    let out = run(
        &dir,
        &[
            "metric", &path, "--kind", "fixpoint", "--gamma", "0.5", "--delta", "1e-12", "-o",
            "d.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("residual_bound="));
    let d = read_distances(&dir.path().join("d.csv")).unwrap();
    let (c_r, c_t) = (1.0 - gamma, gamma);
    let uv = c_r * r / (1.0 - c_t);
    assert!((d.get(2, 3) - uv).abs() < 1e-9);
    assert!((d.get(0, 1) - c_t * uv * (p - q).abs()).abs() < 1e-9);
    let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("s,t,u,v"));
}

#[test]
fn metric_rejects_overweight_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "g.json", &mdp_metrics::gen_grid(2, 2).unwrap());
    let out = run(
        &dir,
        &[
            "metric", &path, "--gamma", "0.5", "--cR", "0.8", "--cT", "0.8",
        ],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn aggregate_endpoints_and_distance_reuse() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "g.json", &mdp_metrics::gen_grid(3, 3).unwrap());
    let out = run(
        &dir,
        &[
            "aggregate",
            &path,
            "--gamma",
            "0.9",
            "--kind",
            "tv",
            "--epsilon",
            "1",
            "-o",
            "q.json",
        ],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    assert_eq!(read_mdp(&dir.path().join("q.json")).unwrap().n_states(), 1);

    let out = run(
        &dir,
        &[
            "metric", &path, "--gamma", "0.9", "--kind", "tv", "-o", "d.csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let out = run(
        &dir,
        &[
            "aggregate",
            &path,
            "--distances",
            "d.csv",
            "--epsilon",
            "0",
            "--partition",
            "p.txt",
            "-o",
            "q.json",
        ],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    assert_eq!(read_mdp(&dir.path().join("q.json")).unwrap().n_states(), 9);
    let text = std::fs::read_to_string(dir.path().join("p.txt")).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.starts_with("0: 0\n"));
}

#[test]
fn aggregate_branching_mid_epsilon_gives_three_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "f.json",
        &mdp_metrics::gen_figure1(0.3, 0.3, 0.5).unwrap(),
    );
    let out = run(
        &dir,
        &[
            "aggregate",
            &path,
            "--gamma",
            "0.5",
            "--delta",
            "1e-10",
            "--epsilon",
            "0.1",
            "--partition",
            "p.txt",
        ],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("p.txt")).unwrap();
    assert_eq!(text, "0: 0 1\n1: 2\n2: 3\n");
}

#[test]
fn aggregate_needs_a_metric_source() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "g.json", &mdp_metrics::gen_grid(2, 2).unwrap());
    assert_eq!(
        code(&run(&dir, &["aggregate", &path, "--epsilon", "0.5"])),
        1
    );
}

#[test]
fn bounds_report_holds() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "g.json", &mdp_metrics::gen_grid(3, 3).unwrap());
    let out = run(
        &dir,
        &[
            "bounds",
            &path,
            "--gamma",
            "0.5",
            "--epsilon",
            "0.3",
            "--epsilon-vi",
            "1e-8",
            "-o",
            "b.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "state,g,bound,true_error");
    assert_eq!(lines.len(), 11);
    for line in &lines[1..10] {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f[3] <= f[2] + 2e-8);
    }
    assert!(lines[10].starts_with("# max_bound="));
}

#[test]
fn bounds_require_gamma_at_most_c_t() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "g.json", &mdp_metrics::gen_grid(2, 2).unwrap());
    let out = run(
        &dir,
        &[
            "bounds",
            &path,
            "--gamma",
            "0.5",
            "--cT",
            "0.4",
            "--cR",
            "0.5",
            "--epsilon",
            "0.1",
        ],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn experiment_small_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &dir,
        &[
            "experiment",
            "--width",
            "3",
            "--height",
            "2",
            "--gammas",
            "0.5,0.1",
            "--eps-steps",
            "4",
            "-o",
            "x.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("x.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "epsilon,gamma,metric_kind,n_blocks,true_error,theorem_bound,naive_bound,metric_ms,total_ms"
    );
    assert_eq!(lines.len(), 1 + 2 * 5 * 2);
    assert!(lines[1].starts_with("0,0.1,fixpoint,6,"));
    assert!(lines[2].starts_with("0,0.1,tv,6,"));
    assert!(lines[20].starts_with("1,0.5,tv,1,"));
}
