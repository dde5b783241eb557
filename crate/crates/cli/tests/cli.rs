mod common;

use common::{code, s, stderr, stdout, Project, TINY_TRAIN};
use nolor_core::acoustic::{self, AcousticModel, ModelConfig};
use nolor_core::audio::{self, AudioClip};
use nolor_core::corpus::{Manifest, Segment, Split};
use nolor_core::synth;

fn tiny_model(p: &Project) -> std::path::PathBuf {
    let model = AcousticModel::init(
        &ModelConfig {
            channels: 8,
            ..ModelConfig::default()
        },
        synth::orthography().build_vocab(),
        4,
    )
    .unwrap();
    let path = p.path("models/latest.nlr");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(&path, acoustic::save_model(&model)).unwrap();
    path
}

#[test]
fn ingest_appends_segments() {
    let p = Project::new("");
    let items = synth::corpus(2, 1.0, 2.0, 1);
    let (wav, cuts) = p.recording("rec1", &items, 1);
    let out = p.run(&[
        "ingest",
        s(&wav),
        s(&cuts),
        "--speaker",
        "ana",
        "--dialect",
        "urmi",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = p.manifest();
    assert_eq!(m.segments.len(), 2);
    assert_eq!(m.segments[0].id, "rec1-000");
    assert_eq!(m.segments[0].speaker_id, "ana");
    assert_eq!(m.segments[1].transcript, items[1].transcript);
    assert_eq!(m.segments[0].split, Split::Unassigned);
    assert!(p.path("recordings/rec1.wav").is_file());
    m.validate_recordings(&p.path("recordings")).unwrap();

    // same id again
    let before = p.manifest_bytes();
    let out = p.run(&["ingest", s(&wav), s(&cuts)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("duplicate"), "{}", stderr(&out));
    assert_eq!(p.manifest_bytes(), before);
}

#[test]
fn any_bad_cut_leaves_the_manifest_unchanged() {
    let p = Project::new("");
    let items = synth::corpus(2, 1.0, 2.0, 2);
    let (wav, cuts) = p.recording("first", &items, 2);
    assert_eq!(code(&p.run(&["ingest", s(&wav), s(&cuts)])), 0);
    let before = p.manifest_bytes();

    let long = AudioClip::new(vec![0.01; 16_000 * 20], 16_000).unwrap();
    let long_wav = p.write_wav("long.wav", &long);
    let bad_sets = [
        "0.0\t1.0\tka\n1.5\t17.5\tsi\n", // second cut over 15 s
        "0.0\t2.0\tka\n1.0\t3.0\tsi\n",  // overlap
        "0.0\t2.0\tka\n3.0\t4.0\tkax\n", // unknown symbol
        "0.0\t2.0\tka\n3.0\t30.0\tsi\n", // past the end
    ];
    for (i, text) in bad_sets.iter().enumerate() {
        let cuts = p.path(&format!("bad{i}.cuts"));
        std::fs::write(&cuts, text).unwrap();
        let out = p.run(&["ingest", s(&long_wav), s(&cuts), "--id", &format!("bad{i}")]);
        assert_eq!(code(&out), 1, "set {i}: {}", stderr(&out));
        assert_eq!(p.manifest_bytes(), before, "set {i}");
        assert!(!p.path(&format!("recordings/bad{i}.wav")).exists());
    }
    let out = p.run(&[
        "ingest",
        s(&long_wav),
        s(&p.path("bad0.cuts")),
        "--id",
        "bad0",
    ]);
    assert!(stderr(&out).contains("15"), "{}", stderr(&out));
}

#[test]
fn exit_codes_separate_failure_kinds() {
    let p = Project::new("");
    let out = p.run(&["--config", "missing.toml", "report"]);
    assert_eq!(code(&out), 2);
    let out = p.run(&["train"]);
    assert_eq!(
        code(&out),
        2,
        "missing manifest is an I/O error: {}",
        stderr(&out)
    );
    let out = p.run(&["ingest", "--bogus"]);
    assert_eq!(code(&out), 1);
    let empty = p.write_wav_raw("empty.wav");
    std::fs::write(p.path("one.cuts"), "0\t1\tka\n").unwrap();
    let out = p.run(&["ingest", s(&empty), s(&p.path("one.cuts"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

trait RawWav {
    fn write_wav_raw(&self, name: &str) -> std::path::PathBuf;
}

impl RawWav for Project {
    fn write_wav_raw(&self, name: &str) -> std::path::PathBuf {
        let path = self.path(name);
        std::fs::write(&path, audio::encode_wav_raw(&[], 16_000, 1)).unwrap();
        path
    }
}

#[test]
fn concurrent_writers_are_refused() {
    let p = Project::new("");
    let items = synth::corpus(1, 1.0, 2.0, 3);
    let (wav, cuts) = p.recording("r", &items, 3);
    let lock = p.hold_lock();
    let out = p.run(&["ingest", s(&wav), s(&cuts)]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("another nolor command"),
        "{}",
        stderr(&out)
    );
    assert!(p.manifest_bytes().is_none());
    drop(lock);
    assert_eq!(code(&p.run(&["ingest", s(&wav), s(&cuts)])), 0);
}

#[test]
fn transcribe_windows_long_audio() {
    let p = Project::new("");
    tiny_model(&p);
    let forty = p.write_wav(
        "forty.wav",
        &AudioClip::new(vec![0.0; 16_000 * 40], 16_000).unwrap(),
    );
    let out = p.run(&["--json", "transcribe", s(&forty)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let windows: Vec<(f64, f64)> = v["chunks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["window_start_s"].as_f64().unwrap(),
                c["window_end_s"].as_f64().unwrap(),
            )
        })
        .collect();
    assert_eq!(windows, vec![(0.0, 15.0), (13.0, 28.0), (26.0, 40.0)]);
    let kept: Vec<(f64, f64)> = v["chunks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["start_s"].as_f64().unwrap(), c["end_s"].as_f64().unwrap()))
        .collect();
    assert_eq!(kept, vec![(0.0, 14.0), (14.0, 27.0), (27.0, 40.0)]);

    let ten = p.write_wav(
        "ten.wav",
        &AudioClip::new(vec![0.0; 16_000 * 10], 16_000).unwrap(),
    );
    let draft = p.path("ten.draft");
    let out = p.run(&["transcribe", s(&ten), "--out", s(&draft)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&draft).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("0.000\t10.000\t"), "{text:?}");

    // deterministic
    let again = p.run(&["--json", "transcribe", s(&forty)]);
    let first = p.run(&["--json", "transcribe", s(&forty)]);
    assert_eq!(again.stdout, first.stdout);

    let empty = p.write_wav_raw("empty.wav");
    assert_eq!(code(&p.run(&["transcribe", s(&empty)])), 3);
    assert_eq!(
        code(&p.run(&["transcribe", s(&ten), "--model", "nope.nlr"])),
        2
    );
}

#[test]
fn accept_records_draft_error() {
    let p = Project::new("");
    let clip = synth::render("kasikuša", 5);
    let wav = p.write_wav("take.wav", &clip);
    let end = clip.duration_s();
    let line = |t: &str| format!("0.000\t{end:.3}\t{t}\n");
    std::fs::write(p.path("draft.txt"), line("kasikušaki")).unwrap();

    std::fs::write(p.path("same.txt"), line("kasikušaki")).unwrap();
    let out = p.run(&[
        "--json",
        "accept",
        s(&wav),
        "same.txt",
        "--draft",
        "draft.txt",
        "--id",
        "t0",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["draft_cer"], 0.0);

    // one substitution over ten graphemes
    std::fs::write(p.path("fixed.txt"), line("kasikušaku")).unwrap();
    let out = p.run(&[
        "--json",
        "accept",
        s(&wav),
        "fixed.txt",
        "--draft",
        "draft.txt",
        "--id",
        "t1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["draft_cer"].as_f64().unwrap() - 0.1).abs() < 1e-12);

    let m = p.manifest();
    assert_eq!(m.segments.len(), 2);
    assert!(m.segments.iter().all(|s| s.split == Split::Unassigned));
    let log = std::fs::read_to_string(p.path("reports/accepted.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let before = p.manifest_bytes();
    std::fs::write(p.path("bad.txt"), line("kasiqu")).unwrap();
    let out = p.run(&[
        "accept",
        s(&wav),
        "bad.txt",
        "--draft",
        "draft.txt",
        "--id",
        "t2",
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(p.manifest_bytes(), before);
    assert_eq!(
        std::fs::read_to_string(p.path("reports/accepted.jsonl")).unwrap(),
        log
    );
    assert!(!p.path("recordings/t2.wav").exists());
}

#[test]
fn report_renders_timings() {
    let p = Project::new("");
    let out = p.run(&["report"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("no data"), "{}", stdout(&out));

    let clip = synth::render("kasi", 1);
    let wav = p.write_wav("w.wav", &clip);
    std::fs::write(
        p.path("c.txt"),
        format!("0\t{:.3}\tkasi\n", clip.duration_s()),
    )
    .unwrap();
    let out = p.run(&[
        "accept",
        s(&wav),
        "c.txt",
        "--minutes-without",
        "132",
        "--minutes-with",
        "21",
        "--cer-without",
        "2.1",
        "--cer-with",
        "1.9",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("6.3×"));
    let first = p.run(&["report"]);
    assert!(
        stdout(&first).contains("132min")
            && stdout(&first).contains("21min")
            && stdout(&first).contains("6.3×")
    );
    assert_eq!(first.stdout, p.run(&["report"]).stdout);

    let out = p.run(&[
        "accept",
        s(&wav),
        "c.txt",
        "--id",
        "x",
        "--minutes-without",
        "5",
    ]);
    assert_eq!(code(&out), 1, "timing flags come together");
}

#[test]
fn training_is_reproducible_and_assigns_splits() {
    let p = Project::new(TINY_TRAIN);
    let items = synth::corpus(5, 1.0, 2.0, 7);
    let (wav, cuts) = p.recording("r", &items, 7);
    assert_eq!(code(&p.run(&["ingest", s(&wav), s(&cuts)])), 0);
    let out = p.run(&["--json", "train"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["train_segments"], 4);
    assert_eq!(v["test_segments"], 1);
    assert_eq!(v["newly_assigned"], 5);
    let model_a = std::fs::read(p.path("models/latest.nlr")).unwrap();
    let out = p.run(&["train"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("train CER"));
    assert_eq!(std::fs::read(p.path("models/latest.nlr")).unwrap(), model_a);

    let out = p.run(&["--seed", "99", "train", "--out", "models/other.nlr"]);
    assert_eq!(code(&out), 0);
    assert_ne!(std::fs::read(p.path("models/other.nlr")).unwrap(), model_a);

    let out = p.run(&["eval"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("TOTAL"));
    assert!(p.path("reports/eval-latest.jsonl").is_file());
    assert_eq!(code(&p.run(&["eval", "--split", "unassigned"])), 3);
}

#[test]
fn sweep_ranks_configurations() {
    let p = Project::new(TINY_TRAIN);
    let items = synth::corpus(5, 1.0, 2.0, 8);
    let (wav, cuts) = p.recording("r", &items, 8);
    assert_eq!(code(&p.run(&["ingest", s(&wav), s(&cuts)])), 0);
    assert_eq!(
        code(&p.run(&["sweep"])),
        3,
        "no splits before the first train"
    );
    assert_eq!(code(&p.run(&["train"])), 0);
    let out = p.run(&["--json", "sweep", "--lr", "0.01,0.001", "--epochs", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rows = v["results"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["test_cer"].as_f64() <= rows[1]["test_cer"].as_f64());
    assert!(p.path("models/sweep-best.nlr").is_file());
}

#[test]
fn augment_preview_writes_every_variant() {
    let p = Project::new("");
    let wav = p.write_wav("clip.wav", &synth::render("kasu", 2));
    let out = p.run(&["augment-preview", s(&wav), "--out", "prev"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut names: Vec<String> = std::fs::read_dir(p.path("prev"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 7, "{names:?}");
    assert!(names.contains(&"clip.original.wav".to_string()));
    assert!(names.contains(&"clip.pitch--2.wav".to_string()));
    let original = std::fs::read(p.path("prev/clip.original.wav")).unwrap();
    assert_eq!(
        audio::ingest_wav(&original).unwrap(),
        audio::ingest_wav(&std::fs::read(&wav).unwrap()).unwrap()
    );
}

#[test]
fn export_bundles_segments_and_schemes() {
    let p = Project::new("");
    let clip = synth::render("ka=šu", 3);
    let wav = p.write_wav("w.wav", &clip);
    std::fs::write(
        p.path("c.txt"),
        format!("0\t{:.3}\tka=šu\n", clip.duration_s()),
    )
    .unwrap();
    assert_eq!(
        code(&p.run(&["ingest", s(&wav), "c.txt", "--split", "train"])),
        0
    );
    let out = p.run(&["export", "bundle"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = Manifest::import(&std::fs::read(p.path("bundle/manifest.jsonl")).unwrap()).unwrap();
    m.validate_recordings(&p.path("bundle/recordings")).unwrap();
    let latin = std::fs::read_to_string(p.path("bundle/transcripts.latin.tsv")).unwrap();
    assert!(latin.contains("ka-xu"), "{latin}");
    let simple = std::fs::read_to_string(p.path("bundle/transcripts.simplified.tsv")).unwrap();
    assert!(simple.contains("kashu"), "{simple}");
    assert_eq!(code(&p.run(&["export", "none", "--split", "test"])), 3);
}

#[test]
fn service_exports_merge_into_the_project() {
    let p = Project::new("");
    let service = p.path("svc");
    std::fs::create_dir_all(service.join("audio")).unwrap();
    let clip = synth::render("kusi", 6);
    std::fs::write(
        service.join("audio/rec-000001.wav"),
        audio::encode_wav(&clip),
    )
    .unwrap();
    let mut m = Manifest::new("synth", 1);
    m.segments.push(Segment {
        id: "rec-000001".into(),
        source_recording: "audio/rec-000001.wav".into(),
        start_sample: 0,
        end_sample: clip.len(),
        transcript: "kusi".into(),
        speaker_id: "user-000001".into(),
        dialect: "north".into(),
        split: Split::Unassigned,
    });
    std::fs::write(p.path("export.jsonl"), m.export()).unwrap();
    let out = p.run(&[
        "ingest",
        "--from-manifest",
        "export.jsonl",
        "--source-root",
        "svc",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let merged = p.manifest();
    assert_eq!(merged.segments[0].id, "collect-rec-000001");
    merged.validate_recordings(&p.path("recordings")).unwrap();
    let out = p.run(&[
        "ingest",
        "--from-manifest",
        "export.jsonl",
        "--source-root",
        "svc",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("nothing new"));
    assert_eq!(p.manifest().segments.len(), 1);
}

#[test]
fn suggested_cuts_cover_each_utterance() {
    let p = Project::new("");
    let items = synth::corpus(3, 1.0, 2.0, 9);
    let (wav, _) = p.recording("r", &items, 9);
    let out = p.run(&["ingest", s(&wav), "--suggest-cuts"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 3, "{}", stdout(&out));
}
