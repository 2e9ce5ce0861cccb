// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use gxli_core::protocol::{AddPair, Client, ClientError, ErrorCode, Hello};
use gxli_core::{DimensionTag, Lang, Memory, State};
use serde_json::Value;
use tempfile::TempDir;

fn gxli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gxli")).args(args).output().expect("spawn gxli")
}

fn ok(args: &[&str]) -> String {
    let out = gxli(args);
    assert!(out.status.success(), "gxli {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_then_inspect_reports_shape() {
    let dir = TempDir::new().unwrap();
    let (pairs, mem) = (path(&dir, "pairs.jsonl"), path(&dir, "m.gxlm"));
    ok(&["fixture", "synth", "--kind", "latent", "--count", "20", "--dim", "16", "--out", s(&pairs)]);
    ok(&["memory", "build", "--pairs", s(&pairs), "--layer", "14", "--out", s(&mem)]);
    let info: Value = serde_json::from_str(&ok(&["memory", "inspect", s(&mem)])).unwrap();
    assert_eq!(info["N"], 20);
    assert_eq!(info["dim"], 16);
    assert_eq!(info["layer"], 14);
    assert_eq!(info["lang"], "ZH");
}

#[test]
fn merge_concatenates() {
    let dir = TempDir::new().unwrap();
    let (pairs, a, merged) = (path(&dir, "p.jsonl"), path(&dir, "a.gxlm"), path(&dir, "ab.gxlm"));
    ok(&["fixture", "synth", "--kind", "latent", "--count", "5", "--dim", "8", "--out", s(&pairs)]);
    ok(&["memory", "build", "--pairs", s(&pairs), "--layer", "3", "--out", s(&a)]);
    let info: Value = serde_json::from_str(&ok(&["memory", "merge", s(&a), s(&a), "--out", s(&merged)])).unwrap();
    assert_eq!(info["N"], 10);
    assert_eq!(Memory::load(&merged).unwrap().len(), 10);
}

#[test]
fn toy_layer_beyond_depth_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let corpus = path(&dir, "c.jsonl");
    ok(&["fixture", "synth", "--count", "4", "--out", s(&corpus)]);
    let out = gxli(&["memory", "build", "--pairs", s(&corpus), "--layer", "14", "--out", s(&path(&dir, "m.gxlm"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("layer 14"));
}

#[test]
fn zero_alpha_matches_no_intervention() {
    let dir = TempDir::new().unwrap();
    let (corpus, mem, data) = (path(&dir, "c.jsonl"), path(&dir, "m.gxlm"), path(&dir, "d.jsonl"));
    ok(&["fixture", "synth", "--count", "24", "--out", s(&corpus)]);
    ok(&["memory", "build", "--pairs", s(&corpus), "--layer", "6", "--out", s(&mem)]);
    ok(&["fixture", "synth", "--kind", "dataset", "--count", "1", "--out", s(&data)]);
    let (ra, rb) = (path(&dir, "ra.jsonl"), path(&dir, "rb.jsonl"));
    let common = ["eval", "run", "--dataset", s(&data), "--model", "toy", "--max-tokens", "4"];
    let mut a_args = common.to_vec();
    a_args.extend(["--memory", s(&mem), "--alpha", "0", "--save-responses", s(&ra)]);
    let mut b_args = common.to_vec();
    b_args.extend(["--no-intervention", "--save-responses", s(&rb)]);
    let a: Value = serde_json::from_str(&ok(&a_args)).unwrap();
    let b: Value = serde_json::from_str(&ok(&b_args)).unwrap();
    assert_eq!(a["cells"], b["cells"]);
    assert_eq!(a["fpr_acc"], b["fpr_acc"]);
    assert_eq!(std::fs::read(&ra).unwrap(), std::fs::read(&rb).unwrap());
    assert_eq!(a["meta"]["alpha"], 0.0);
    assert!(b["meta"]["alpha"].is_null());
}

#[test]
fn compare_of_identical_reports_is_flat() {
    let dir = TempDir::new().unwrap();
    let (data, resp, report) = (path(&dir, "d.jsonl"), path(&dir, "r.jsonl"), path(&dir, "rep.json"));
    ok(&["fixture", "synth", "--kind", "dataset", "--count", "2", "--out", s(&data)]);
    let rows: Vec<String> = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            serde_json::json!({"id": v["id"], "response": format!("The answer is {}.", v["answer"].as_str().unwrap())})
                .to_string()
        })
        .collect();
    std::fs::write(&resp, rows.join("\n")).unwrap();
    ok(&["eval", "run", "--dataset", s(&data), "--responses", s(&resp), "--out", s(&report)]);
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["fpr_acc"]["EN"], 1.0);
    let delta: Value = serde_json::from_str(&ok(&["eval", "compare", s(&report), s(&report)])).unwrap();
    assert!(delta["cells"].as_array().unwrap().iter().all(|c| c["delta"] == 0.0));
    assert_eq!(delta["fpr_acc"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = gxli(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(gxli(&["memory", "inspect"]).status.code(), Some(1));
}

#[test]
fn unreadable_input_is_a_data_error() {
    let out = gxli(&["memory", "inspect", "/nonexistent/m.gxlm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn kappa_on_split_frequencies() {
    let dir = TempDir::new().unwrap();
    let splits = path(&dir, "splits.json");
    std::fs::write(&splits, r#"{"6-0": 1693, "5-1": 291, "4-2": 110, "3-3": 42, "2-4": 16, "1-5": 1, "0-6": 3}"#).unwrap();
    let k: Value = serde_json::from_str(&ok(&["kappa", "compute", "--input", s(&splits)])).unwrap();
    assert!((k["P_bar"].as_f64().unwrap() - 0.9120).abs() <= 5e-4);
    assert!((k["P_e"].as_f64().unwrap() - 0.8943).abs() <= 5e-4);
    assert!((k["kappa"].as_f64().unwrap() - 0.168).abs() <= 2e-3);

    let table = path(&dir, "t.csv");
    std::fs::write(&table, "6,0\n6,0\n").unwrap();
    assert_eq!(gxli(&["kappa", "compute", "--input", s(&table)]).status.code(), Some(2));
}

#[test]
fn seeded_fixtures_are_reproducible() {
    let a = ok(&["fixture", "synth", "--kind", "latent", "--count", "3", "--dim", "4", "--seed", "7"]);
    let b = ok(&["fixture", "synth", "--kind", "latent", "--count", "3", "--dim", "4", "--seed", "7"]);
    let c = ok(&["fixture", "synth", "--kind", "latent", "--count", "3", "--dim", "4", "--seed", "8"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn gap_shrinks_after_intervention() {
    let dir = TempDir::new().unwrap();
    let (pairs, mem, states) = (path(&dir, "p.jsonl"), path(&dir, "m.gxlm"), path(&dir, "s.jsonl"));
    ok(&["fixture", "synth", "--kind", "latent", "--count", "60", "--dim", "16", "--out", s(&pairs)]);
    ok(&["memory", "build", "--pairs", s(&pairs), "--layer", "0", "--out", s(&mem)]);
    let mut rows = Vec::new();
    for line in std::fs::read_to_string(&pairs).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        rows.push(serde_json::json!({"id": v["sample_id"], "lang": "EN", "h": v["h_en"]}).to_string());
        rows.push(serde_json::json!({"id": v["sample_id"], "lang": "ZH", "h": v["h_tgt"]}).to_string());
    }
    std::fs::write(&states, rows.join("\n")).unwrap();
    let table: Value =
        serde_json::from_str(&ok(&["diag", "gap", "--states", s(&states), "--memory", s(&mem), "--alpha", "1"])).unwrap();
    let zh = table.as_array().unwrap().iter().find(|r| r["lang"] == "ZH").unwrap();
    assert!(zh["gap_after"].as_f64().unwrap() < zh["gap_before"].as_f64().unwrap());

    let csv = ok(&["diag", "project", "--states", s(&states)]);
    assert_eq!(csv.lines().next(), Some("id,lang,x,y"));
    assert_eq!(csv.lines().count(), 121);
}

fn sample_pair(id: u64, base: f32) -> AddPair {
    AddPair {
        sample_id: id,
        lang: Lang::ZH,
        dimension_tag: DimensionTag::AU,
        h_en: vec![base + 1.0, 1.0, 0.5, 0.0],
        h_tgt: vec![base, 0.2, 1.0, 0.1],
    }
}

#[test]
fn stdio_session_round_trip() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_gxli"))
        .args(["serve", "--stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut client = Client::new(child.stdout.take().unwrap(), child.stdin.take().unwrap());
    let hello = Hello { dim: 4, layer: 2, lang: Lang::ZH, k: 2, alpha: 0.5 };
    assert_eq!(client.hello(hello).unwrap(), hello);
    let mut local = Memory::new(4, 2, Lang::ZH).unwrap();
    for (i, base) in [0.5f32, 1.0, 2.0].into_iter().enumerate() {
        let p = sample_pair(i as u64, base);
        assert_eq!(client.add_pair(p.clone()).unwrap(), i as u64 + 1);
        let (en, tgt) = (State::new(p.h_en).unwrap(), State::new(p.h_tgt).unwrap());
        local.add_pair(&en, &tgt, p.sample_id, p.lang, p.dimension_tag).unwrap();
    }
    let stats = client.stats().unwrap();
    assert_eq!((stats.count, stats.dim, stats.layer, stats.frozen), (3, 4, 2, false));

    let h = vec![0.9f32, 0.3, 0.8, 0.2];
    let served = client.intervene(7, DimensionTag::AU, h.clone()).unwrap();
    let expected = local.intervene(&State::new(h).unwrap(), 2, 0.5, None).unwrap();
    for (a, b) in served.iter().zip(expected.as_slice()) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }

    assert_eq!(client.freeze().unwrap(), 3);
    match client.add_pair(sample_pair(9, 3.0)) {
        Err(ClientError::Server { code, .. }) => assert_eq!(code, ErrorCode::MEMORY_FROZEN),
        other => panic!("expected MEMORY_FROZEN, got {other:?}"),
    }
    drop(client);
    assert!(child.wait().unwrap().success());
}

#[test]
fn tcp_once_serves_a_preloaded_memory() {
    let dir = TempDir::new().unwrap();
    let mem_path = path(&dir, "m.gxlm");
    let mut mem = Memory::new(4, 2, Lang::ZH).unwrap();
    for (i, base) in [0.5f32, 1.0, 2.0].into_iter().enumerate() {
        let p = sample_pair(i as u64, base);
        mem.add_pair(&State::new(p.h_en).unwrap(), &State::new(p.h_tgt).unwrap(), p.sample_id, p.lang, p.dimension_tag)
            .unwrap();
    }
    mem.save(&mem_path).unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_gxli"))
        .args(["serve", "--tcp", "127.0.0.1:0", "--once", "--concurrent", "--memory", s(&mem_path)])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // Kept open until the child exits so its last diagnostics have a reader.
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut banner = String::new();
    stderr.read_line(&mut banner).unwrap();
    let addr = banner.trim().rsplit(' ').next().unwrap().to_string();

    let stream = TcpStream::connect(&addr).unwrap();
    let mut client = Client::new(stream.try_clone().unwrap(), stream);
    client.hello(Hello { dim: 4, layer: 2, lang: Lang::ZH, k: 1, alpha: 1.0 }).unwrap();
    assert!(client.stats().unwrap().frozen);
    let h = vec![0.4f32, 0.1, 1.2, 0.0];
    let served = client.intervene(1, DimensionTag::NONE, h.clone()).unwrap();
    let expected = mem.intervene(&State::new(h).unwrap(), 1, 1.0, None).unwrap();
    for (a, b) in served.iter().zip(expected.as_slice()) {
        assert!((a - b).abs() <= 1e-6);
    }
    drop(client);
    assert!(child.wait().unwrap().success());
}

#[test]
fn tune_grid_emits_the_trace() {
    let dir = TempDir::new().unwrap();
    let corpus = path(&dir, "c.jsonl");
    ok(&["fixture", "synth", "--count", "40", "--out", s(&corpus)]);
    let args = ["tune", "grid", "--pairs", s(&corpus), "--objective", "gap", "--layers", "4-6", "--alphas", "0.1,0.5"];
    let csv = ok(&args);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("phase,layer,alpha,score,gap_before,gap_after,closer_fraction,error"));
    // Three layers, then the one alpha not already evaluated at the best layer.
    assert_eq!(lines.count(), 4);
    assert_eq!(csv, ok(&args));
}
