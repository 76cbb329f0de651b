use std::fs;
use std::path::Path;
use std::process::Command;

use tweedie_core::gaussian::{gauss_functional, hetero_condition, HeteroJointSpec};
use tweedie_core::numerics::integrate_with_breaks;
use tweedie_core::oracle::noise_pdf;
use tweedie_core::types::Spread;
use tweedie_core::{FunctionalSpec, NoiseSpec};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn run(dir: &Path, config: &str, flags: &[&str]) -> i32 {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_tweedie"))
        .arg("--config")
        .arg(&path)
        .arg("--quiet")
        .args(flags)
        .status()
        .unwrap();
    status.code().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn denoise_three_rows_of_posterior_means() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("in.csv"), "y\n-1\n0.5\n2\n").unwrap();
    let code = run(
        dir.path(),
        r#"{"command":"denoise","noise":{"family":"gaussian","sd":1},
            "prior":{"type":"gaussian_mixture","components":[{"mean":0,"covariance":1,"weight":1}]},
            "functionals":[{"target":"mean"}],"data_file":"in.csv","out":"out.csv"}"#,
        &[],
    );
    assert_eq!(code, 0);
    let out = dir.path().join("out.csv");
    let (header, _) = read_csv(&out);
    assert_eq!(header, ["y", "mean", "f_y", "err_est", "converged"]);
    let means = column(&out, "mean");
    for (m, y) in means.iter().zip([-1.0, 0.5, 2.0]) {
        assert!((m - y / 2.0).abs() <= 1e-10);
    }
}

#[test]
fn denoise_point_mass_gives_the_atom() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(
        dir.path(),
        r#"{"command":"denoise","noise":{"family":"logistic","scale":0.7},
            "prior":{"type":"atomic","atoms":[{"location":1.5,"weight":1}]},
            "functionals":[{"target":"mean"}],"grid":{"lo":-1,"hi":4,"n":11},"out":"out.csv"}"#,
        &[],
    );
    assert_eq!(code, 0);
    for m in column(&dir.path().join("out.csv"), "mean") {
        assert!((m - 1.5).abs() <= 1e-8);
    }
}

#[test]
fn heteroskedastic_denoise_matches_direct_calls() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("in.csv"),
        "y,sigma\n0.3,0.5\n1.2,1\n-0.4,1\n2.5,2\n",
    )
    .unwrap();
    let code = run(
        dir.path(),
        r#"{"command":"denoise","joint":{"atoms":[
              {"location":0,"variance":0.25,"weight":0.2},{"location":1,"variance":0.25,"weight":0.1},
              {"location":-1,"variance":1,"weight":0.3},{"location":2,"variance":1,"weight":0.2},
              {"location":3,"variance":4,"weight":0.2}]},
            "functionals":[{"target":"mean"},{"target":"variance"}],"data_file":"in.csv","out":"out.csv"}"#,
        &[],
    );
    assert_eq!(code, 0);
    let joint = HeteroJointSpec::univariate(&[
        (0.0, 0.25, 0.2),
        (1.0, 0.25, 0.1),
        (-1.0, 1.0, 0.3),
        (2.0, 1.0, 0.2),
        (3.0, 4.0, 0.2),
    ]);
    let out = dir.path().join("out.csv");
    let (means, vars) = (column(&out, "mean"), column(&out, "variance"));
    for (i, (y, s)) in [(0.3, 0.5), (1.2, 1.0), (-0.4, 1.0), (2.5, 2.0)]
        .into_iter()
        .enumerate()
    {
        let (model, _) = hetero_condition(&joint, &Spread::Scalar(s * s)).unwrap();
        let m = gauss_functional(s * s, &model, y, &FunctionalSpec::Mean)
            .unwrap()
            .value_f64();
        let v = gauss_functional(s * s, &model, y, &FunctionalSpec::Variance)
            .unwrap()
            .value_f64();
        assert_eq!(means[i], m);
        assert_eq!(vars[i], v);
    }
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("in.csv"), "y\n0.1\nabc\n").unwrap();
    let config = r#"{"command":"denoise","noise":{"family":"gaussian","sd":1},
        "prior":{"type":"atomic","atoms":[{"location":0,"weight":1}]},
        "functionals":[{"target":"mean"}],"data_file":"in.csv","out":"out.csv"}"#;
    assert_eq!(run(dir.path(), config, &[]), 2);
    assert_eq!(run(dir.path(), "{not json", &[]), 2);
    fs::write(dir.path().join("in.csv"), "y\n0.1\n").unwrap();
    assert_eq!(run(dir.path(), config, &[]), 0);
    assert_eq!(
        run(dir.path(), &config.replace("\"sd\":1", "\"sd\":-1"), &[]),
        2
    );
}

#[test]
fn strict_mode_fails_on_unconverged_rows() {
    let dir = tempfile::tempdir().unwrap();
    // A CDF under an atomic prior needs far more series terms than the default schedule.
    let config = r#"{"command":"denoise","noise":{"family":"gaussian","sd":1},
        "prior":{"type":"atomic","atoms":[{"location":0,"weight":0.5},{"location":1,"weight":0.5}]},
        "functionals":[{"target":"cdf","threshold":0.5}],"grid":{"lo":0,"hi":1,"n":3},"out":"out.csv"}"#;
    assert_eq!(run(dir.path(), config, &[]), 0);
    let (header, rows) = read_csv(&dir.path().join("out.csv"));
    let i = header.iter().position(|h| h == "converged").unwrap();
    assert!(rows.iter().any(|r| r[i] == "false"));
    assert_eq!(run(dir.path(), config, &["--strict"]), 3);
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(
            dir.path(),
            r#"{"command":"validate","suite":"conjugate","out":"rep"}"#,
            &[]
        ),
        0
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("rep/report.json")).unwrap())
            .unwrap();
    for key in ["suite", "seed", "cases", "max_abs_error"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    let suite = r#"{"suite":"strict","cases":[{"family":"logistic",
        "prior":{"type":"atomic","atoms":[{"location":-1,"weight":0.3},{"location":0,"weight":0.4},{"location":2,"weight":0.3}]},
        "noise":{"family":"logistic","scale":0.7},"functional":{"target":"mean"},"ys":[0.1,0.9],"tolerance":0}]}"#;
    fs::write(dir.path().join("suite.json"), suite).unwrap();
    let config = r#"{"command":"validate","suite_file":"suite.json","out":"rep2"}"#;
    assert_eq!(run(dir.path(), config, &[]), 1);
    let (_, rows) = read_csv(&dir.path().join("rep2/summary.csv"));
    assert_eq!(rows.len(), 2);
    fs::write(dir.path().join("suite.json"), r#"{"suite":"x","cases":[]}"#).unwrap();
    assert_eq!(run(dir.path(), config, &[]), 2);
    assert_eq!(
        run(
            dir.path(),
            r#"{"command":"validate","suite":"table9","out":"rep"}"#,
            &[]
        ),
        2
    );
}

#[test]
fn simulate_is_reproducible_and_respects_the_prior() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"command":"simulate","noise":{"family":"cauchy","scale":1},
        "prior":{"type":"atomic","atoms":[{"location":0,"weight":1}]},"n":100,"seed":1,"out":"a.csv"}"#;
    assert_eq!(run(dir.path(), config, &[]), 0);
    assert_eq!(run(dir.path(), &config.replace("a.csv", "b.csv"), &[]), 0);
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert!(column(&dir.path().join("a.csv"), "x")
        .iter()
        .all(|x| *x == 0.0));
    assert_eq!(
        run(dir.path(), &config.replace("\"n\":100", "\"n\":0"), &[]),
        2
    );
}

#[test]
fn simulated_gumbel_noise_has_the_gumbel_mean() {
    let beta = 1.3;
    let noise = NoiseSpec::Gumbel {
        location: 0.0,
        scale: beta,
    };
    let integrated = integrate_with_breaks(
        |v| v * noise_pdf(&noise, &[v]),
        -60.0,
        200.0,
        &[0.0],
        1e-12,
        1e-12,
    )
    .unwrap();
    assert!((integrated.value - beta * EULER_GAMMA).abs() <= 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"command":"simulate","noise":{"family":"gumbel","scale":1.3},
        "prior":{"type":"atomic","atoms":[{"location":-1,"weight":0.5},{"location":2,"weight":0.5}]},
        "n":1000000,"seed":8,"out":"g.csv"}"#;
    assert_eq!(run(dir.path(), config, &[]), 0);
    let out = dir.path().join("g.csv");
    let (x, y) = (column(&out, "x"), column(&out, "y"));
    let n = x.len() as f64;
    let mean = x.iter().zip(&y).map(|(x, y)| y - x).sum::<f64>() / n;
    let sd = beta * std::f64::consts::PI / 6f64.sqrt();
    assert!(
        (mean - beta * EULER_GAMMA).abs() <= 4.0 * sd / n.sqrt(),
        "{mean}"
    );
}

#[test]
fn simulate_then_denoise_from_a_kernel_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let sim = r#"{"command":"simulate","noise":{"family":"gaussian","sd":1},
        "prior":{"type":"atomic","atoms":[{"location":-1,"weight":0.5},{"location":1.5,"weight":0.5}]},
        "n":5000,"seed":4,"out":"sim.csv"}"#;
    assert_eq!(run(dir.path(), sim, &[]), 0);
    let mut ys = column(&dir.path().join("sim.csv"), "y");
    ys.sort_by(f64::total_cmp);
    let (lo, hi) = (ys[ys.len() / 20], ys[ys.len() * 19 / 20]);
    let den = format!(
        r#"{{"command":"denoise","noise":{{"family":"gaussian","sd":1}},"prior":{{"type":"file","file":"sim.csv"}},
            "functionals":[{{"target":"mean"}},{{"target":"variance"}}],"grid":{{"lo":{lo},"hi":{hi},"n":25}},"out":"den.csv"}}"#
    );
    assert_eq!(run(dir.path(), &den, &[]), 0);
    let out = dir.path().join("den.csv");
    assert!(column(&out, "mean")
        .iter()
        .chain(&column(&out, "variance"))
        .all(|v| v.is_finite()));
}

#[test]
fn multivariate_denoise_writes_one_column_per_coordinate() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("in.csv"), "y1,y2\n0.1,0.4\n0.9,-0.3\n").unwrap();
    let code = run(
        dir.path(),
        r#"{"command":"denoise","noise":{"family":"product_laplace","scale":1,"dim":2},
            "prior":{"type":"atomic","atoms":[{"location":[0,0],"weight":0.5},{"location":[1,0.5],"weight":0.5}]},
            "functionals":[{"target":"mean"},{"target":"variance"}],"data_file":"in.csv","out":"out.csv"}"#,
        &[],
    );
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&dir.path().join("out.csv"));
    assert_eq!(
        header,
        [
            "y1",
            "y2",
            "mean_1",
            "mean_2",
            "variance_1_1",
            "variance_1_2",
            "variance_2_1",
            "variance_2_2",
            "f_y",
            "err_est",
            "converged"
        ]
    );
    assert_eq!(rows.len(), 2);
}
