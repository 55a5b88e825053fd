use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use te_mdp::io::{agent_marginals, compile, read_scenario, PolicyFile};

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("te-mdp-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_te-mdp")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// 3×3 grid: start bottom-left, goal top-right, an obstacle pacing the
/// middle column.
fn small_grid() -> Value {
    json!({
        "model": {
            "kind": "moving_obstacle",
            "width": 3,
            "height": 3,
            "goal_cells": [2],
            "agent_start": 6,
            "moving_obstacle": { "cells": [1, 4, 7], "start": 4 }
        },
        "formula": "!crash U goal",
        "horizon": 6,
        "beta": 1.0
    })
}

fn explicit(p_stay: f64) -> Value {
    json!({
        "model": {
            "kind": "explicit",
            "expensive_states": ["lo", "hi"],
            "free_states": ["home", "goal"],
            "actions": ["L", "R"],
            "atomic_props": ["goal"],
            "kernel": [
                [[p_stay, 1.0 - p_stay, 0.0, 0.0], [0.5, 0.0, 0.5, 0.0]],
                [[0.0, 1.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]],
                [[0.5, 0.0, 0.5, 0.0], [0.0, 0.0, 0.0, 1.0]],
                [[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 1.0]]
            ],
            "labels": [[], ["goal"], [], ["goal"]],
            "initial": { "expensive": "lo", "free": "home" }
        },
        "formula": "F goal",
        "horizon": 3,
        "beta": 1.0
    })
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.display().to_string()
}

fn json_of(o: &Output) -> Value {
    serde_json::from_str(&stdout(o)).unwrap()
}

#[test]
fn compile_reports_sizes() {
    let dir = workdir("compile");
    let s = write(&dir, "s.json", &small_grid());
    let cache = dir.join("product.json");
    let o = run(&["compile", "--scenario", &s, "--out", cache.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    for key in ["states 27", "expensive 3", "free 9", "actions 5", "automaton_states 3", "product_states"] {
        assert!(text.contains(key), "missing `{key}` in\n{text}");
    }
    assert!(cache.exists());
}

#[test]
fn solve_is_deterministic_and_round_trips() {
    let dir = workdir("determinism");
    let s = write(&dir, "s.json", &small_grid());
    let a = dir.join("a.json");
    let b = dir.join("b.json");
    for out in [&a, &b] {
        let o = run(&["solve", "--scenario", &s, "--seed", "7", "--memory", "1", "--out", out.to_str().unwrap()]);
        assert!(matches!(code(&o), 0 | 3), "{}", stderr(&o));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let file: PolicyFile = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(file.metadata.memory, 1);
    assert_eq!(file.metadata.seed, Some(7));
    file.table().unwrap();
    let again = serde_json::to_string_pretty(&file).unwrap() + "\n";
    assert_eq!(again.as_bytes(), &bytes[..]);
}

#[test]
fn beta_zero_matches_value_iteration() {
    let dir = workdir("beta0");
    let s = write(&dir, "s.json", &small_grid());
    let p = dir.join("p.json");
    let o = run(&["solve", "--scenario", &s, "--beta", "0", "--out", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let e = json_of(&run(&["eval", "--scenario", &s, "--policy", p.to_str().unwrap()]));
    let fail = e["failure_probability"].as_f64().unwrap();
    let h = e["reach_probability_optimum"].as_f64().unwrap();
    assert!((fail - (1.0 - h)).abs() <= 1e-9, "{fail} vs {}", 1.0 - h);
}

#[test]
fn huge_beta_is_blind() {
    let dir = workdir("blind");
    let s = write(&dir, "s.json", &small_grid());
    let o = run(&["solve", "--scenario", &s, "--beta", "1e6"]);
    assert!(matches!(code(&o), 0 | 3), "{}", stderr(&o));
    assert!(json_of(&o)["te_nats"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn marginals_start_at_the_agent_and_sum_to_one() {
    let dir = workdir("marginals");
    let s = write(&dir, "s.json", &small_grid());
    let p = dir.join("p.json");
    run(&["solve", "--scenario", &s, "--beta", "2", "--out", p.to_str().unwrap()]);
    let csv = dir.join("m.csv");
    let o = run(&[
        "export-marginals",
        "--scenario",
        &s,
        "--policy",
        p.to_str().unwrap(),
        "--times",
        "0,3,6",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,cell_x,cell_y,probability"));
    let rows: Vec<(usize, usize, usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    let at0: Vec<_> = rows.iter().filter(|r| r.0 == 0).collect();
    assert_eq!(at0.len(), 1);
    assert_eq!((at0[0].1, at0[0].2), (0, 2));
    assert_eq!(at0[0].3, 1.0);
    for t in [3, 6] {
        let sum: f64 = rows.iter().filter(|r| r.0 == t).map(|r| r.3).sum();
        assert!((sum - 1.0).abs() <= 1e-8);
        assert!(rows.iter().filter(|r| r.0 == t).all(|r| r.3 > 0.0));
    }
}

#[test]
fn marginals_agree_with_simulation() {
    let dir = workdir("mc");
    let s = write(&dir, "s.json", &small_grid());
    let p = dir.join("p.json");
    run(&["solve", "--scenario", &s, "--beta", "2", "--out", p.to_str().unwrap()]);
    let scenario = read_scenario(Path::new(&s)).unwrap();
    let c = compile(&scenario, false).unwrap();
    let file: PolicyFile = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
    let q = file.table().unwrap();
    let t_check = 4;
    let exact = agent_marginals(&c, &q, &[t_check]).unwrap();

    let pm = &c.product;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pick = |pairs: &mut dyn Iterator<Item = (usize, f64)>| {
        let x: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in pairs {
            acc += w;
            last = i;
            if x < acc {
                return i;
            }
        }
        last
    };
    let runs = 50_000;
    let mut counts = std::collections::HashMap::new();
    for _ in 0..runs {
        let mut v = pm.initial();
        for t in 0..t_check {
            let u = pick(&mut q.row(t, v, 0).iter().copied().enumerate());
            v = pick(&mut pm.row(v, u).iter().copied());
        }
        *counts.entry(c.agent_coords(v)).or_insert(0usize) += 1;
    }
    for (_, x, y, prob) in exact {
        let freq = *counts.get(&(x, y)).unwrap_or(&0) as f64 / runs as f64;
        let se = (prob * (1.0 - prob) / runs as f64).sqrt().max(1e-4);
        assert!((freq - prob).abs() <= 4.0 * se, "cell ({x},{y}): {freq} vs {prob}");
    }
}

#[test]
fn sweep_endpoints() {
    let dir = workdir("sweep");
    let s = write(&dir, "s.json", &small_grid());
    let o = run(&["sweep", "--scenario", &s, "--betas", "0,1,1000000"]);
    assert!(matches!(code(&o), 0 | 3), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let fail: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    let te: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(te[2] <= 1e-6);
    assert!(fail[0] <= fail[1] + 1e-9 && fail[1] <= fail[2] + 1e-9);

    let compiled = run(&["compile", "--scenario", &s]);
    let h: f64 = stdout(&compiled)
        .lines()
        .find_map(|l| l.strip_prefix("max_reach_probability "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((fail[0] - (1.0 - h)).abs() <= 1e-9);

    let grid = run(&["sweep", "--scenario", &s, "--log-grid", "0.1,10,3"]);
    assert_eq!(stdout(&grid).lines().count(), 4);
}

#[test]
fn bad_row_is_an_input_error_naming_the_row() {
    let dir = workdir("badrow");
    let s = write(&dir, "s.json", &explicit(0.7));
    let o = run(&["compile", "--scenario", &s]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let mut bad = explicit(0.75);
    bad["model"]["kernel"][0][0][1] = json!(0.3);
    let s = write(&dir, "bad.json", &bad);
    let o = run(&["compile", "--scenario", &s]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("row (lo,home, L)"), "{}", stderr(&o));

    let mut tiny = explicit(0.7);
    tiny["model"]["kernel"][0][0][1] = json!(0.3 + 5e-10);
    let s = write(&dir, "tiny.json", &tiny);
    assert_eq!(code(&run(&["compile", "--scenario", &s])), 2);
    assert_eq!(code(&run(&["compile", "--scenario", &s, "--renormalize"])), 0);
}

#[test]
fn malformed_input_is_exit_two_with_location() {
    let dir = workdir("malformed");
    let p = dir.join("broken.json");
    std::fs::write(&p, "{\n  \"formula\": \"F goal\",\n  \"horizon\": -3\n}").unwrap();
    let o = run(&["compile", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let mut both = small_grid();
    both["target_prob"] = json!(0.5);
    let s = write(&dir, "both.json", &both);
    assert_eq!(code(&run(&["solve", "--scenario", &s])), 2);

    let mut unknown = small_grid();
    unknown["model"]["speed"] = json!(3);
    let s = write(&dir, "unknown.json", &unknown);
    let o = run(&["compile", "--scenario", &s]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("speed"), "{}", stderr(&o));

    let s = write(&dir, "ok.json", &small_grid());
    let o = run(&["compile", "--scenario", &s, "--bogus"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn infeasible_target_is_exit_four() {
    let dir = workdir("infeasible");
    let mut v = explicit(0.7);
    v["horizon"] = json!(1);
    let s = write(&dir, "s.json", &v);
    let o = run(&["solve", "--scenario", &s, "--target-prob", "0.99"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"));

    let p = dir.join("p.json");
    let o = run(&["solve", "--scenario", &s, "--target-prob", "0.2", "--out", p.to_str().unwrap()]);
    assert!(matches!(code(&o), 0 | 3), "{}", stderr(&o));
    let file: PolicyFile = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
    assert!(1.0 - file.metadata.failure_probability >= 0.2 - 1e-6);
    assert_eq!(file.metadata.target_prob, Some(0.2));
}

#[test]
fn policy_for_another_scenario_is_rejected() {
    let dir = workdir("mismatch");
    let grid = write(&dir, "g.json", &small_grid());
    let exp = write(&dir, "e.json", &explicit(0.7));
    let p = dir.join("p.json");
    run(&["solve", "--scenario", &exp, "--out", p.to_str().unwrap()]);
    let o = run(&["eval", "--scenario", &grid, "--policy", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let mut file: Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
    file["tables"][0][0][0][0] = json!(0.9);
    file["tables"][0][0][0][1] = json!(0.2);
    std::fs::write(&p, file.to_string()).unwrap();
    let o = run(&["eval", "--scenario", &exp, "--policy", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
