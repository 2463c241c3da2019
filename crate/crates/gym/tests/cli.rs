use std::process::Command;

fn gym() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_recall-gym"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn generate_train_validate_eval() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world.json");
    let st = gym().args(["generate", "--preset", "simple_like", "--seed", "2", "--out"]).arg(&world).output().unwrap().status;
    assert!(st.success());
    recall_gym::UniverseDocument::load(&world).unwrap();

    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "world = \"nq_like\"\ntrainer = \"sft\"\nseeds = [0]\n[splits]\ntrain = 200\nvalidation = 16\ntest = 80\n[train]\nepochs = 1\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    let st = gym().args(["train", "--seed", "5", "--config"]).arg(&cfg).arg("--out").arg(&run).output().unwrap().status;
    assert!(st.success());
    assert!(run.join("seed_5/checkpoint_post.json").is_file());

    let out = gym().arg("validate").arg("--out").arg(&run).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = gym().arg("eval").arg("--out").arg(&run).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    // Re-scored post accuracy equals the reported one.
    let row: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[2], row[3], "{text}");
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = gym().args(["reproduce", "--suite", "nope"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown suite"));
    let out = gym().args(["generate", "--preset", "nope", "--out", "/dev/null"]).output().unwrap();
    assert!(!out.status.success());
}
