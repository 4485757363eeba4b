use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_so3diff"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_config(dir: &Path, model: &str, iterations: u64, extra: &str) {
    fs::write(
        dir.join("run.toml"),
        format!(
            "model = \"{model}\"\ndata = \"d.bin\"\nout_dir = \"run\"\niterations = {iterations}\n\
             batch_size = 32\nlog_every = 25\nckpt_every = 50\nhidden_layers = 2\nhidden_width = 16\n\
             n_steps = 10\n{extra}"
        ),
    )
    .unwrap();
}

#[test]
fn gen_data_is_deterministic_and_validates_names() {
    let d = tempfile::tempdir().unwrap();
    ok(
        d.path(),
        &[
            "gen-data",
            "four-gaussians",
            "--n",
            "10000",
            "--seed",
            "4",
            "--out",
            "a.bin",
        ],
    );
    ok(
        d.path(),
        &[
            "gen-data",
            "four-gaussians",
            "--n",
            "10000",
            "--seed",
            "4",
            "--out",
            "b.bin",
        ],
    );
    let a = fs::read(d.path().join("a.bin")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b.bin")).unwrap());
    let set: so3diff::data::SampleSet<f64> = so3diff::io::read_samples(&a).unwrap();
    assert_eq!(set.len(), 10_000);

    let out = run(d.path(), &["gen-data", "moons", "--out", "c.bin"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("checkerboard") && err.contains("three-stripes"),
        "{err}"
    );
}

#[test]
fn train_resume_sample_and_evaluate() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &[
            "gen-data", "two-blob", "--n", "1200", "--seed", "1", "--out", "d.bin",
        ],
    );
    small_config(p, "ddpm", 100, "");
    ok(p, &["train", "--config", "run.toml"]);
    assert!(p.join("run/ckpt_00000050.bin").exists());
    let loss = fs::read_to_string(p.join("run/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1 + 4);

    small_config(p, "ddpm", 150, "resume = \"run/model.ckpt\"\n");
    let msg = ok(p, &["train", "--config", "run.toml"]);
    assert!(msg.contains("step 150"), "{msg}");
    let loss = fs::read_to_string(p.join("run/loss.csv")).unwrap();
    assert_eq!(loss.lines().last().unwrap().split(',').next(), Some("150"));

    for f in ["s1.bin", "s2.bin"] {
        ok(
            p,
            &[
                "sample",
                "run/model.ckpt",
                "--n",
                "600",
                "--seed",
                "9",
                "--context",
                "1",
                "--out",
                f,
            ],
        );
    }
    let s1 = fs::read(p.join("s1.bin")).unwrap();
    assert_eq!(s1, fs::read(p.join("s2.bin")).unwrap());
    let set: so3diff::data::SampleSet<f64> = so3diff::io::read_samples(&s1).unwrap();
    assert_eq!((set.len(), set.seed, set.n_steps), (600, 9, 10));

    let report = ok(
        p,
        &[
            "eval-c2st",
            "s1.bin",
            "d.bin",
            "--k-folds",
            "2",
            "--out",
            "r.toml",
        ],
    );
    assert!(report.contains("score ="));
    assert_eq!(fs::read_to_string(p.join("r.toml")).unwrap(), report);
}

#[test]
fn sgm_smoke_run_writes_loadable_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &["gen-data", "checkerboard", "--n", "500", "--out", "d.bin"],
    );
    small_config(p, "sgm", 100, "precision = \"f32\"\n");
    ok(p, &["train", "--config", "run.toml"]);
    let c = so3diff::io::load_checkpoint::<f32>(&p.join("run/model.ckpt")).unwrap();
    assert_eq!(c.steps_done(), 100);
    ok(
        p,
        &[
            "sample",
            "run/model.ckpt",
            "--n",
            "50",
            "--steps",
            "10",
            "--out",
            "s.bin",
        ],
    );
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    small_config(p, "ddpm", 10, "beta_max = 1.2\n");
    let out = run(p, &["train", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta_max"));
    // the data file does not even exist: validation came first
    assert!(!p.join("run").exists());

    fs::write(
        p.join("run.toml"),
        "model = \"sgm\"\ndata = \"d.bin\"\nlearning_rate = 1\n",
    )
    .unwrap();
    assert_eq!(
        run(p, &["train", "--config", "run.toml"]).status.code(),
        Some(2)
    );
}

#[test]
fn corrupted_checkpoint_produces_no_output() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &["gen-data", "four-gaussians", "--n", "200", "--out", "d.bin"],
    );
    small_config(p, "sgm", 20, "");
    ok(p, &["train", "--config", "run.toml"]);
    let mut bytes = fs::read(p.join("run/model.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(p.join("bad.ckpt"), &bytes).unwrap();
    let out = run(p, &["sample", "bad.ckpt", "--out", "s.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
    assert!(!p.join("s.bin").exists());
}

#[test]
fn plot_emits_projection_and_svg() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &[
            "gen-data", "two-blob", "--n", "400", "--seed", "2", "--out", "d.bin",
        ],
    );
    ok(p, &["plot", "d.bin", "--out", "p.csv", "--svg", "p.svg"]);
    let csv = fs::read_to_string(p.join("p.csv")).unwrap();
    assert_eq!(csv.lines().count(), 401);
    assert!(fs::read_to_string(p.join("p.svg"))
        .unwrap()
        .contains("<circle"));
}

#[test]
fn uniform_latitudes_follow_cosine_law() {
    use rand::SeedableRng;
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let rots = (0..4000)
        .map(|_| so3diff::so3::sample_uniform::<f64, _>(&mut rng))
        .collect();
    let set = so3diff::data::SampleSet::new(rots, "uniform");
    so3diff::io::save_samples(&p.join("u.bin"), &set).unwrap();
    ok(p, &["plot", "u.bin", "--out", "p.csv"]);
    let lats: Vec<f64> = fs::read_to_string(p.join("p.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // area element cos(lat): CDF (1 + sin lat) / 2
    let ks = so3diff::eval::ks_one_sample(&lats, |l| (1.0 + l.sin()) / 2.0);
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn ed_report_marks_empty_bins() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let mut text = String::from("x,y,z,ax,ay,az\n");
    for i in 0..40 {
        text.push_str(&format!("0,0,{},0,0,1\n", i as f64 * 0.1));
    }
    fs::write(p.join("c.csv"), text).unwrap();
    let rep = ok(
        p,
        &[
            "eval-ed",
            "c.csv",
            "--bins",
            "0,1,2,100,200",
            "--out",
            "ed.toml",
        ],
    );
    let v: toml::Table = rep.parse().unwrap();
    let bins = v["bins"].as_array().unwrap();
    assert_eq!(bins.len(), 4);
    let omega = bins[0]["omega"].as_float().unwrap();
    assert!((omega - 2.0 / 3.0).abs() < 1e-12);
    assert!(bins[3].get("omega").is_none());
    assert_eq!(bins[3]["pairs"].as_integer(), Some(0));

    let out = run(p, &["eval-ed", "c.csv", "--bins", "2,1"]);
    assert_eq!(out.status.code(), Some(2));
}
