mod common;

use common::*;
use nfmlab::checkpoint::Checkpoint;
use nfmlab::RunConfig;
use proptest::prelude::*;

#[test]
fn pipeline_produces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    full_pipeline(&cfg, &out);
    for name in [
        "teacher.ckpt",
        "teacher_loss.csv",
        "teacher_loss.svg",
        "teacher_samples.svg",
        "student_fm.ckpt",
        "student_ot.ckpt",
        "student_sdot.ckpt",
        "student_nfm.ckpt",
        "loss_fm.csv",
        "loss_nfm.svg",
        "samples.csv",
        "samples.svg",
        "trajectories.csv",
        "trajectories.svg",
        "eval.csv",
        "ztable.csv",
        "config.txt",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let eval = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    let mut lines = eval.lines();
    assert_eq!(lines.next(), Some("nfe,solver,schedule,guidance,w2,kappa"));
    let nfes: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(nfes, ["5", "3"]);
    let samples = std::fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 129);
}

#[test]
fn identical_runs_are_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = nfmlab(&cfg, out, &["train-teacher"]);
        assert!(o.status.success());
    }
    assert_eq!(artifacts(&a), artifacts(&b));
    let c = dir.path().join("c");
    let o = std::process::Command::new(BIN)
        .args(["--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "8", "train-teacher"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_ne!(std::fs::read(a.join("teacher.ckpt")).unwrap(), std::fs::read(c.join("teacher.ckpt")).unwrap());
}

#[test]
fn eta_flag_beats_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{TINY}teacher.eta = 0.1\n"));
    let out = dir.path().join("out");
    let o = nfmlab(&cfg, &out, &["train-teacher", "--eta", "0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let resolved = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(resolved.lines().any(|l| l.replace(' ', "") == "teacher.eta=0.2"), "{resolved}");
    let teacher = nfmlab::models::load_teacher(&out.join("teacher.ckpt")).unwrap();
    assert_eq!(teacher.eta(), 0.2);
}

#[test]
fn config_errors_name_the_key_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("teacher.etta = 0.1\n", "teacher.etta"),
        ("teacher.eta = -1\n", "teacher.eta"),
        ("student.widths = 3,x\n", "student.widths"),
        ("seed = 1\nseed = 2\n", "seed"),
    ] {
        let cfg = write_config(dir.path(), text);
        let o = nfmlab(&cfg, &dir.path().join("out"), &["train-teacher"]);
        assert_eq!(o.status.code(), Some(1), "{text}");
        assert!(stderr(&o).contains(needle), "{text}: {}", stderr(&o));
    }
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = nfmlab(&cfg, &out, &["distill", "--coupling", "nfm"]);
    assert_eq!(o.status.code(), Some(1));
    let o = nfmlab(&cfg, &out, &["ztable", "--teacher", "absent.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.ckpt"));
    let o = nfmlab(&cfg, &out, &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));

    assert!(nfmlab(&cfg, &out, &["distill", "--coupling", "fm"]).status.success());
    let student = out.join("student_fm.ckpt");
    let student = student.to_str().unwrap();
    let o = nfmlab(&cfg, &out, &["eval", "--student", student, "--nfe", ""]);
    assert_eq!(o.status.code(), Some(1));
    let o = nfmlab(&cfg, &out, &["sample", "--student", student, "--solver", "heun", "--steps", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = nfmlab(&cfg, &out, &["sample", "--student", student, "--solver", "heun", "--steps", "16"]);
    assert!(stdout(&o).contains("NFE=31"), "{}", stdout(&o));
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    assert!(nfmlab(&cfg, &out, &["distill", "--coupling", "fm"]).status.success());
    let path = out.join("student_fm.ckpt");
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 3;
    bytes[last] ^= 0x40;
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, &bytes).unwrap();
    let o = nfmlab(&cfg, &out, &["sample", "--student", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn checkpoint_files_round_trip_bytewise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    assert!(nfmlab(&cfg, &out, &["train-teacher"]).status.success());
    let bytes = std::fs::read(out.join("teacher.ckpt")).unwrap();
    let decoded = Checkpoint::decode(&bytes).unwrap();
    assert_eq!(decoded.encode(), bytes);
    let teacher = nfmlab::models::load_teacher(&out.join("teacher.ckpt")).unwrap();
    let again = nfmlab::models::teacher_to_checkpoint(&teacher).unwrap().encode();
    assert_eq!(again, bytes);
}

#[test]
fn svgs_are_well_formed_800_square() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    full_pipeline(&cfg, &out);
    let mut seen = 0;
    for entry in std::fs::read_dir(&out).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().and_then(|e| e.to_str()) != Some("svg") {
            continue;
        }
        let text = std::fs::read_to_string(&p).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let root = doc.root_element();
        assert_eq!(root.tag_name().name(), "svg");
        assert_eq!(root.attribute("width"), Some("800"));
        assert_eq!(root.attribute("height"), Some("800"));
        seen += 1;
    }
    assert!(seen >= 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn config_parse_is_total(text in "(?s).{0,200}") {
        let _ = RunConfig::parse(&text);
    }

    #[test]
    fn config_lines_never_crash(key in "[a-z_.]{0,20}", value in "[ -~]{0,20}") {
        match RunConfig::parse(&format!("{key} = {value}\n")) {
            Ok(_) => {}
            Err(e) => prop_assert!(e.key.is_some() || e.line.is_some()),
        }
    }

    #[test]
    fn checkpoint_decode_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = Checkpoint::decode(&bytes);
    }

    #[test]
    fn checkpoint_prefixes_never_decode(cut in 0usize..1000) {
        let mut c = Checkpoint::default();
        c.insert_scalar("meta", "a", 1.5).unwrap();
        c.insert_scalar("meta", "b", -2.0).unwrap();
        let bytes = c.encode();
        let cut = cut % bytes.len();
        prop_assert!(Checkpoint::decode(&bytes[..cut]).is_err());
    }

    #[test]
    fn resolved_config_round_trips(seed in any::<u64>(), eta in 0.0f64..1.0, steps in 1usize..100_000) {
        let mut cfg = RunConfig::default();
        cfg.seed = seed;
        cfg.teacher.eta = eta;
        cfg.student.steps = steps;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
