use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agreebench"))
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

/// Sentences of the mini treebank, one per line, as a training corpus.
fn write_corpus(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(core_fixture("mini_treebank.conllu")).unwrap();
    let mut corpus = String::new();
    for block in text.split("\n\n") {
        let words: Vec<&str> = block
            .lines()
            .filter(|l| !l.starts_with('#'))
            .filter_map(|l| {
                let cols: Vec<&str> = l.split('\t').collect();
                (cols.len() == 10 && cols[0].parse::<usize>().is_ok()).then(|| cols[1])
            })
            .collect();
        if !words.is_empty() {
            corpus.push_str(&words.join(" "));
            corpus.push('\n');
        }
    }
    let path = dir.join("corpus.txt");
    fs::write(&path, corpus).unwrap();
    path
}

fn write_judgments(dir: &Path) -> PathBuf {
    let mut csv = String::from("subject_id,item_id,is_filler,chose_correct\n");
    for s in 0..6 {
        for (k, item) in ["t1-01:2-7", "t1-02:2-7", "t2-01:2-8", "t4-01:2-6", "t1-03:2-7"].iter().enumerate() {
            csv.push_str(&format!("u{},{},0,{}\n", s, item, u8::from(s + k < 7)));
            csv.push_str(&format!("u{},{}#n1,0,{}\n", s, item, u8::from(s + k < 5)));
        }
        csv.push_str(&format!("u{},filler-a,1,{}\n", s, u8::from(s != 5)));
    }
    let path = dir.join("judgments.csv");
    fs::write(&path, csv).unwrap();
    path
}

fn write_config(dir: &Path, treebank: Option<&Path>) -> PathBuf {
    let corpus = write_corpus(dir);
    let judgments = write_judgments(dir);
    let stub = core_fixture("stub_scorer.sh");
    let treebank_line = treebank.map(|p| format!("treebank = {:?}\n", p.display().to_string())).unwrap_or_default();
    let cfg = format!(
        "out = \"out\"\n\
         [inputs]\n\
         {treebank_line}\
         corpus = {corpus:?}\n\
         valid = {corpus:?}\n\
         judgments = {judgments:?}\n\
         [seeds]\n\
         nonce = 7\n\
         fillers = 8\n\
         report = 9\n\
         [mining]\n\
         min_per_number = 2\n\
         [nonce]\n\
         fillers = 4\n\
         [ngram]\n\
         vocab_size = 1000\n\
         [evaluate]\n\
         window = 5\n\
         scorers = [\"kn\", \"unigram\", \"ext:sh '{stub}'\"]\n\
         [report]\n\
         permutations = 500\n",
        corpus = corpus.display().to_string(),
        judgments = judgments.display().to_string(),
        stub = stub.display(),
    );
    let path = dir.join("run.toml");
    fs::write(&path, cfg).unwrap();
    path
}

fn jsonl_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn fixture_run_is_fast_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), Some(&core_fixture("mini_treebank.conllu")));
    let start = Instant::now();
    let out = run(bin().arg("run").arg(&cfg));
    let secs = start.elapsed().as_secs_f64();
    assert!(out.status.success());
    assert!(secs < 2.0, "run took {:.2}s", secs);
    let dir = tmp.path().join("out");
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), dir.display().to_string());

    for f in [
        "constructions.jsonl",
        "instances.jsonl",
        "originals.jsonl",
        "nonce.jsonl",
        "fillers.jsonl",
        "kn.bin",
        "kn.counts.txt",
        "vocab.tsv",
        "counts.tsv",
        "records-kn5.jsonl",
        "records-kn5.meta.json",
        "records-unigram.jsonl",
        "records-stub.jsonl",
        "accuracy_overall.csv",
        "alignment.csv",
        "fig_attractors.json",
        "manifest.json",
    ] {
        assert!(dir.join(f).is_file(), "{} missing", f);
    }
    let originals = fs::read_to_string(dir.join("originals.jsonl")).unwrap();
    assert_eq!(originals.lines().count(), 38);
    assert_eq!(fs::read_to_string(dir.join("nonce.jsonl")).unwrap().lines().count(), 38 * 9);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let stages: Vec<&str> =
        manifest["stages"].as_array().unwrap().iter().map(|s| s["stage"].as_str().unwrap()).collect();
    assert_eq!(stages, ["train-ngram", "extract", "nonce", "fillers", "evaluate", "report"]);
    assert_eq!(manifest["stages"][2]["seeds"]["nonce"], 7);
    assert_eq!(manifest["stages"][0]["inputs"]["corpus"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("records-kn5.meta.json")).unwrap()).unwrap();
    assert!(meta["perplexity"].as_f64().unwrap() > 1.0);
    assert_eq!(meta["window"], 5);

    let first = jsonl_files(&dir);
    assert!(first.len() >= 8);
    assert!(run(bin().arg("run").arg(&cfg)).status.success());
    assert_eq!(first, jsonl_files(&dir));
    let manifests = fs::read_dir(&dir).unwrap().filter(|e| e.as_ref().unwrap().file_name() == "manifest.json").count();
    assert_eq!(manifests, 1);

    // A different seed changes the nonce items.
    let other = tmp.path().join("other");
    assert!(run(bin().arg("run").arg(&cfg).arg("--seed").arg("8").arg("--out").arg(&other)).status.success());
    assert_ne!(fs::read(dir.join("nonce.jsonl")).unwrap(), fs::read(other.join("nonce.jsonl")).unwrap());
    assert_eq!(fs::read(dir.join("originals.jsonl")).unwrap(), fs::read(other.join("originals.jsonl")).unwrap());
}

#[test]
fn subcommands_compose_to_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let tb = core_fixture("mini_treebank.conllu");
    let cfg = write_config(tmp.path(), Some(&tb));
    assert!(run(bin().arg("run").arg(&cfg)).status.success());
    let piped = tmp.path().join("piped");
    let corpus = tmp.path().join("corpus.txt");
    let p = |name: &str| piped.join(name);
    let steps: Vec<Vec<String>> = vec![
        vec![
            "train-ngram".into(),
            "--corpus".into(),
            corpus.display().to_string(),
            "--vocab-size".into(),
            "1000".into(),
            "--valid".into(),
            corpus.display().to_string(),
        ],
        vec![
            "extract".into(),
            "--treebank".into(),
            tb.display().to_string(),
            "--vocab".into(),
            p("vocab.tsv").display().to_string(),
            "--min-per-number".into(),
            "2".into(),
        ],
        vec![
            "nonce".into(),
            "--items".into(),
            p("originals.jsonl").display().to_string(),
            "--treebank".into(),
            tb.display().to_string(),
            "--vocab".into(),
            p("vocab.tsv").display().to_string(),
            "--seed".into(),
            "7".into(),
        ],
        vec![
            "fillers".into(),
            "--treebank".into(),
            tb.display().to_string(),
            "--vocab".into(),
            p("vocab.tsv").display().to_string(),
            "--n".into(),
            "4".into(),
            "--seed".into(),
            "8".into(),
        ],
        vec![
            "evaluate".into(),
            "--items".into(),
            p("originals.jsonl").display().to_string(),
            p("nonce.jsonl").display().to_string(),
            "--window".into(),
            "5".into(),
            "--scorer".into(),
            format!("kn:{}", p("kn.bin").display()),
            "--scorer".into(),
            format!("unigram:{}", p("counts.tsv").display()),
            "--scorer".into(),
            format!("ext:sh '{}'", core_fixture("stub_scorer.sh").display()),
        ],
    ];
    for args in steps {
        let out = run(bin().args(&args).arg("--out").arg(&piped));
        assert!(out.status.success(), "{:?}", args);
    }
    let out = run(bin()
        .arg("report")
        .arg("--records")
        .args(["records-kn5.jsonl", "records-stub.jsonl", "records-unigram.jsonl"].map(&p))
        .arg("--judgments")
        .arg(tmp.path().join("judgments.csv"))
        .args(["--seed", "9", "--permutations", "500", "--out"])
        .arg(&piped));
    assert!(out.status.success());
    assert_eq!(jsonl_files(&piped), jsonl_files(&tmp.path().join("out")));
    for f in ["accuracy_by_construction.csv", "alignment.csv", "fig_attractors.json", "kn.bin"] {
        assert_eq!(fs::read(p(f)).unwrap(), fs::read(tmp.path().join("out").join(f)).unwrap(), "{}", f);
    }
}

#[test]
fn missing_treebank_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), None);
    let out = run(bin().arg("run").arg(&cfg));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inputs.treebank"));

    let cfg = write_config(tmp.path(), Some(&tmp.path().join("nope.conllu")));
    let out = run(bin().arg("run").arg(&cfg));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("inputs.treebank") && err.contains("nope.conllu"), "{}", err);

    let out = run(bin().args(["extract", "--treebank", "/no/such/file", "--out"]).arg(tmp.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("treebank"));
}

#[test]
fn bad_usage_and_scorer_failures() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(bin().arg("extract")).status.code(), Some(2));
    assert_eq!(run(bin().arg("frobnicate")).status.code(), Some(2));

    fs::write(tmp.path().join("bad.toml"), "colour = 1\n").unwrap();
    assert_eq!(run(bin().arg("run").arg(tmp.path().join("bad.toml"))).status.code(), Some(2));

    let tb = core_fixture("mini_treebank.conllu");
    let ex =
        run(bin().arg("extract").arg("--treebank").arg(&tb).args(["--min-per-number", "2", "--out"]).arg(tmp.path()));
    assert!(ex.status.success());
    let items = tmp.path().join("originals.jsonl");
    let eval = |scorer: &str| {
        run(bin().arg("evaluate").arg("--items").arg(&items).arg("--scorer").arg(scorer).arg("--out").arg(tmp.path()))
    };
    assert_eq!(eval("lstm:model.pt").status.code(), Some(2));
    let stub = core_fixture("stub_scorer.sh");
    let out = eval(&format!("ext:STUB_MODE=nan sh '{}'", stub.display()));
    assert_eq!(out.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("stage") || String::from_utf8_lossy(&out.stderr).contains("stub")
    );
    let out = eval(&format!("ext:STUB_MODE=failexit sh '{}'", stub.display()));
    assert_eq!(out.status.code(), Some(1));
    assert!(eval(&format!("ext:sh '{}'", stub.display())).status.success());
}
