//! Acceptance suite. Every criterion runs, prints one PASS/FAIL line, and the
//! process exits non-zero if any failed.

mod common;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarm_explore::cli::{cmd_compare, CompareArgs, Overrides};
use swarm_explore::config::{SimConfig, Strategy};
use swarm_explore::engine::{self, Simulation};
use swarm_explore::llm::{
    ChatClient, HeuristicMock, HttpChatClient, LlmConfig, ScriptedMock, TransportError,
};
use swarm_explore::mapping::{probability, CellCoord, OccupancyGrid, L_FREE, L_OCC};
use swarm_explore::planning::plan_route;
use swarm_explore::selection::{
    baseline_select, build_context, llm_select, sample_quantile, Method,
};
use swarm_explore::world::{EnvironmentMap, Pose};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn random_grid(rng: &mut ChaCha8Rng, cols: usize, rows: usize) -> OccupancyGrid {
    let v = (0..cols * rows)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    OccupancyGrid::from_log_odds(cols, rows, v).unwrap()
}

/// 0 Free, 1 Unknown, 2 Occupied, straight from the thresholds.
fn class_code(l: f64) -> u8 {
    let p = probability(l);
    if p >= 0.65 {
        2
    } else if p <= 0.35 {
        0
    } else {
        1
    }
}

fn frontier_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let grids: Vec<_> = (0..200).map(|_| random_grid(&mut rng, 20, 20)).collect();
    let started = Instant::now();
    let mut total = 0;
    for (gi, g) in grids.iter().enumerate() {
        let mut expected = Vec::new();
        for r in 0..20i64 {
            for c in 0..20i64 {
                if class_code(g.log_odds(CellCoord::new(c as usize, r as usize))) != 0 {
                    continue;
                }
                let unknown = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dc, dr)| {
                    let (nc, nr) = (c + dc, r + dr);
                    (0..20).contains(&nc)
                        && (0..20).contains(&nr)
                        && class_code(g.log_odds(CellCoord::new(nc as usize, nr as usize))) == 1
                });
                if unknown {
                    expected.push(CellCoord::new(c as usize, r as usize));
                }
            }
        }
        let got = g.detect_frontiers();
        check(got == expected, || {
            format!(
                "grid {gi}: {} frontiers vs oracle {}",
                got.len(),
                expected.len()
            )
        })?;
        total += got.len();
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 1.0, || format!("took {secs:.3} s"))?;
    Ok(format!("200 grids, {total} frontiers, {secs:.3} s"))
}

/// Dijkstra with a binary heap over the same fixed-point step costs.
fn dijkstra(g: &OccupancyGrid, start: CellCoord, goal: CellCoord) -> Option<u64> {
    let (cols, rows) = (g.cols() as i64, g.rows() as i64);
    let mut dist = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(start, 0u64);
    heap.push(Reverse((0u64, start)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if u == goal {
            return Some(d);
        }
        if dist.get(&u).is_some_and(|&best| d > best) {
            continue;
        }
        for (dc, dr) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let (c, r) = (u.col as i64 + dc, u.row as i64 + dr);
            if c < 0 || r < 0 || c >= cols || r >= rows {
                continue;
            }
            let v = CellCoord::new(c as usize, r as usize);
            let p = probability(g.log_odds(v));
            if p >= 0.65 {
                continue;
            }
            let nd = d + ((1.0 + 10.0 * p) * 1e9).round() as u64;
            if dist.get(&v).is_none_or(|&best| nd < best) {
                dist.insert(v, nd);
                heap.push(Reverse((nd, v)));
            }
        }
    }
    None
}

fn astar_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut cases = Vec::new();
    for _ in 0..100 {
        let v = (0..225)
            .map(|_| {
                if rng.random_bool(0.25) {
                    rng.random_range(1.0..4.0)
                } else {
                    rng.random_range(-3.0..0.6)
                }
            })
            .collect();
        let g = OccupancyGrid::from_log_odds(15, 15, v).unwrap();
        let s = CellCoord::new(rng.random_range(0..15), rng.random_range(0..15));
        let t = CellCoord::new(rng.random_range(0..15), rng.random_range(0..15));
        cases.push((g, s, t));
    }
    let started = Instant::now();
    let mut reachable = 0;
    for (i, (g, s, t)) in cases.iter().enumerate() {
        let route = plan_route(g, *s, *t).map_err(|e| e.to_string())?;
        let oracle = dijkstra(g, *s, *t);
        match (route, oracle) {
            (None, None) => {}
            (Some(r), Some(d)) => {
                let expected = d as f64 / 1e9;
                check(r.total_cost == expected, || {
                    format!("case {i}: cost {} vs {expected}", r.total_cost)
                })?;
                reachable += 1;
            }
            (r, o) => {
                return Err(format!(
                    "case {i}: reachability differs ({} vs {})",
                    r.is_some(),
                    o.is_some()
                ))
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 2.0, || format!("took {secs:.3} s"))?;
    Ok(format!("100 grids, {reachable} reachable, {secs:.3} s"))
}

/// Grids as a robot would build them: each cell a random number of hit and
/// miss updates.
fn sensor_grid(rng: &mut ChaCha8Rng) -> OccupancyGrid {
    let v = (0..64)
        .map(|_| rng.random_range(0..4) as f64 * L_OCC + rng.random_range(0..6) as f64 * L_FREE)
        .collect();
    OccupancyGrid::from_log_odds(8, 8, v).unwrap()
}

fn fusion_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let zero = OccupancyGrid::new(8, 8);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let (a, b, c) = (
            sensor_grid(&mut rng),
            sensor_grid(&mut rng),
            sensor_grid(&mut rng),
        );
        let ab = a.fuse(&b).unwrap();
        check(ab == b.fuse(&a).unwrap(), || {
            format!("pair {i}: not commutative")
        })?;
        check(a.fuse(&zero).unwrap() == a, || {
            format!("pair {i}: zero is not an identity")
        })?;
        let left = ab.fuse(&c).unwrap();
        let right = a.fuse(&b.fuse(&c).unwrap()).unwrap();
        for (x, y) in left.values().iter().zip(right.values()) {
            worst = worst.max((x - y).abs());
        }
    }
    // float addition reassociates up to rounding
    check(worst <= 1e-12, || format!("associativity error {worst:e}"))?;
    Ok(format!(
        "1000 pairs; commutative and identity exact, associativity within {worst:e}"
    ))
}

fn sampler_statistics() -> Outcome {
    let frontiers: Vec<(CellCoord, f64)> = (0..101)
        .map(|i| (CellCoord::new(i, 0), i as f64 * 0.5))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let n = 10_000;
    let mut index_sum = 0.0;
    for _ in 0..n {
        let c = baseline_select(&frontiers, 0.15, &mut rng).map_err(|e| e.to_string())?;
        index_sum += c.col as f64;
    }
    let mean_index = index_sum / n as f64;
    let qs: Vec<f64> = (0..n).map(|_| sample_quantile(0.15, &mut rng)).collect();
    let mean_q = qs.iter().sum::<f64>() / n as f64;
    let std_q = (qs.iter().map(|q| (q - mean_q).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    check((13.5..=16.5).contains(&mean_index), || {
        format!("mean index {mean_index:.3}")
    })?;
    check((0.015..=0.025).contains(&std_q), || {
        format!("std q {std_q:.5}")
    })?;
    Ok(format!("mean index {mean_index:.3}, std q {std_q:.5}"))
}

fn retry_fallback() -> Outcome {
    let mut g = OccupancyGrid::new(6, 6);
    for r in 0..3 {
        for c in 0..6 {
            g.add(CellCoord::new(c, r), -2.0);
        }
    }
    let frontiers = g.detect_frontiers();
    let set: BTreeSet<_> = frontiers.iter().copied().collect();
    let valid = frontiers[frontiers.len() / 2];
    let ctx = build_context(&g, &frontiers, &Pose::new(1.25, 0.75, 0.0), Vec::new())
        .map_err(|e| e.to_string())?;
    let fallback = frontiers[0];

    let bad = ScriptedMock::with_replies([
        Ok("no target line".to_owned()),
        Ok("TARGET: (99,99)".to_owned()),
        Err(TransportError::Timeout),
        Ok("TARGET: (0,5)".to_owned()),
        Err(TransportError::Status {
            status: 429,
            body: String::new(),
        }),
        Ok("TARGET (1,2)".to_owned()),
    ]);
    let d = llm_select(&ctx, &bad, &set, || Ok(fallback)).map_err(|e| e.to_string())?;
    check(
        d.method == Method::LlmFallback && d.attempts == 6 && d.target == fallback,
        || format!("all invalid gave {d:?}"),
    )?;
    check(bad.prompts().len() == 6, || {
        format!("{} requests instead of 6", bad.prompts().len())
    })?;

    for k in 1..=6u32 {
        let mut replies = vec!["TARGET: (99,99)".to_owned(); k as usize - 1];
        replies.push(format!("reasoning\nTARGET: ({},{})", valid.col, valid.row));
        let mock = ScriptedMock::new(replies);
        let d = llm_select(&ctx, &mock, &set, || Ok(fallback)).map_err(|e| e.to_string())?;
        check(
            d.method == Method::Llm && d.attempts == k && d.target == valid,
            || format!("valid at {k} gave {d:?}"),
        )?;
    }
    Ok("6 invalid -> llm_fallback/6; valid at k -> llm/k for k=1..6".into())
}

fn cave_config(method: Strategy, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::load(&common::world("cave20.json")).unwrap();
    cfg.method = method;
    cfg.seed = seed;
    cfg
}

/// Parses `sizes=a+b;mean_desired=x/y;...` from a merge event.
fn merge_detail(detail: &str) -> Option<(u64, u64, u64, u64)> {
    let mut sizes = None;
    let mut means = None;
    for part in detail.split(';') {
        if let Some(v) = part.strip_prefix("sizes=") {
            let (a, b) = v.split_once('+')?;
            sizes = Some((a.parse().ok()?, b.parse().ok()?));
        }
        if let Some(v) = part.strip_prefix("mean_desired=") {
            let (a, b) = v.split_once('/')?;
            means = Some((a.parse().ok()?, b.parse().ok()?));
        }
    }
    let ((a, b), (x, y)) = (sizes?, means?);
    Some((a, b, x, y))
}

fn team_protocol() -> Outcome {
    let mut cfg = cave_config(Strategy::Baseline, 1);
    cfg.n_robots = 15;
    cfg.total_steps = 300;
    let mut sim = Simulation::initialize(cfg).map_err(|e| e.to_string())?;
    let mut seen_events = 0;
    let (mut merges, mut chr_leaves) = (0, 0);
    while !sim.is_finished() {
        sim.step().map_err(|e| e.to_string())?;
        let step = sim.step_index() - 1;
        let mut owner = vec![None; 15];
        let mut count = 0;
        for t in sim.teams().iter() {
            check(!t.members.is_empty(), || {
                format!("step {step}: team {} empty", t.team_id)
            })?;
            check(t.members.contains(&t.leader), || {
                format!("step {step}: leader of {} not a member", t.team_id)
            })?;
            for &m in &t.members {
                check(owner[m].is_none(), || {
                    format!("step {step}: robot {m} in two teams")
                })?;
                owner[m] = Some(t.team_id);
                count += 1;
            }
        }
        check(count == 15, || {
            format!("step {step}: {count} robots in teams")
        })?;
        for (i, r) in sim.robots().iter().enumerate() {
            check(owner[i] == Some(r.team_id), || {
                format!("step {step}: robot {i} team id mismatch")
            })?;
        }
        for e in &sim.events()[seen_events..] {
            match e.event.as_str() {
                "merge" => {
                    let (a, b, x, y) = merge_detail(&e.detail)
                        .ok_or_else(|| format!("bad merge detail {:?}", e.detail))?;
                    check(a + b <= x.min(y), || {
                        format!("step {}: merge {a}+{b} > min({x},{y})", e.step)
                    })?;
                    merges += 1;
                }
                "leave_chr" => chr_leaves += 1,
                _ => {}
            }
        }
        seen_events = sim.events().len();
    }
    check(chr_leaves >= 1, || "no CHR leave event".into())?;
    Ok(format!(
        "300 steps, {merges} merges, {chr_leaves} CHR leaves"
    ))
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    for dir in [&a, &b] {
        let mut cfg = cave_config(Strategy::MockHeuristic, 3);
        cfg.out_dir = dir.path().to_owned();
        engine::run(cfg).map_err(|e| e.to_string())?;
    }
    let mut bytes = 0;
    for f in ["metrics.csv", "events.csv", "decisions.csv"] {
        let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
        check(x == y, || format!("{f} differs"))?;
        bytes += x.len();
    }
    Ok(format!("3 logs byte-identical ({bytes} bytes)"))
}

fn feature_property() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = CompareArgs {
        common: Overrides {
            config: common::world("cave20.json"),
            steps: None,
            robots: None,
            out: Some(dir.path().to_owned()),
        },
        methods: vec![Strategy::Baseline, Strategy::MockHeuristic],
        seeds: vec![1, 2, 3, 4, 5],
        stats: true,
        jobs: 4,
    };
    let mut printed = Vec::new();
    let cmp = cmd_compare(&args, &mut printed).map_err(|e| e.to_string())?;
    let (base, mock) = (&cmp.methods[0], &cmp.methods[1]);
    let summary = format!(
        "nf {:.3} vs {:.3}, no {:.3} vs {:.3} (mock vs baseline); explored ratio {:.3} (reported only)",
        mock.mean_n_frontier_neighbors,
        base.mean_n_frontier_neighbors,
        mock.mean_n_occupied_neighbors,
        base.mean_n_occupied_neighbors,
        cmp.ratio.unwrap_or(f64::NAN)
    );
    check(
        mock.mean_n_frontier_neighbors > base.mean_n_frontier_neighbors,
        || summary.clone(),
    )?;
    check(
        mock.mean_n_occupied_neighbors < base.mean_n_occupied_neighbors,
        || summary.clone(),
    )?;
    Ok(summary)
}

fn warm_up() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = cave_config(Strategy::Llm, 2);
    cfg.total_steps = 60;
    cfg.out_dir = dir.path().to_owned();
    let env = EnvironmentMap::load(&cfg.env_path).map_err(|e| e.to_string())?;
    let client: Arc<dyn ChatClient> = Arc::new(HeuristicMock::default());
    Simulation::with_client(cfg, env, Some(client))
        .and_then(|s| s.run())
        .map_err(|e| e.to_string())?;
    let text =
        std::fs::read_to_string(dir.path().join("decisions.csv")).map_err(|e| e.to_string())?;
    let (mut early, mut late) = (0, 0);
    for line in text.lines().skip(1) {
        let mut fields = line.split(',');
        let step: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or("bad row")?;
        let method = fields.nth(1).ok_or("bad row")?;
        if step < 20 {
            check(method == "baseline", || {
                format!("step {step} decided by {method}")
            })?;
            early += 1;
        } else {
            late += 1;
        }
    }
    check(early > 0 && late > 0, || {
        format!("{early} warm-up and {late} later decisions")
    })?;
    Ok(format!(
        "{early} warm-up decisions all baseline, {late} after"
    ))
}

fn scale_smoke() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = SimConfig::load(&common::world("cave40.json")).map_err(|e| e.to_string())?;
    cfg.n_robots = 100;
    cfg.total_steps = 300;
    cfg.method = Strategy::MockHeuristic;
    cfg.check_invariants = true;
    cfg.out_dir = dir.path().to_owned();
    let started = Instant::now();
    let outcome = engine::run(cfg).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    check(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "N=100, 300 steps, explored {} cells in {secs:.2} s",
        outcome.summary.final_explored_cells
    ))
}

fn wire_client() -> Outcome {
    use common::{completion, Reply, StubServer};
    let client = |url: &str, timeout_secs: f64| {
        HttpChatClient::new(LlmConfig {
            base_url: url.to_owned(),
            api_key_env: "SWARM_EXPLORE_ACCEPTANCE_NO_KEY".into(),
            timeout_secs,
            ..LlmConfig::default()
        })
        .map_err(|e| e.to_string())
    };
    let server = StubServer::start(vec![
        Reply::ok(completion("TARGET: (2,3)")),
        Reply::status(429, "{}"),
        Reply::ok("{\"choices\": ["),
    ]);
    let c = client(&server.url, 5.0)?;
    let got = c.complete("hi").map_err(|e| e.to_string())?;
    check(got == "TARGET: (2,3)", || {
        format!("round trip gave {got:?}")
    })?;
    let e = c.complete("hi");
    check(
        matches!(e, Err(TransportError::Status { status: 429, .. })),
        || format!("429 gave {e:?}"),
    )?;
    let e = c.complete("hi");
    check(matches!(e, Err(TransportError::Decode(_))), || {
        format!("malformed JSON gave {e:?}")
    })?;

    let slow = StubServer::start(vec![
        Reply::ok(completion("late")).delayed(Duration::from_secs(6))
    ]);
    let c = client(&slow.url, 2.0)?;
    let started = Instant::now();
    let e = c.complete("hi");
    let secs = started.elapsed().as_secs_f64();
    check(e == Err(TransportError::Timeout), || {
        format!("slow server gave {e:?}")
    })?;
    check((secs - 2.0).abs() <= 1.0, || {
        format!("timeout after {secs:.2} s, configured 2 s")
    })?;
    Ok(format!(
        "round trip, 429, malformed JSON; 2 s timeout fired at {secs:.2} s"
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("frontier oracle equivalence", frontier_oracle),
        ("A* optimality", astar_optimality),
        ("fusion algebra", fusion_algebra),
        ("sampler statistics", sampler_statistics),
        ("retry/fallback contract", retry_fallback),
        ("team protocol invariants", team_protocol),
        ("determinism", determinism),
        ("target feature property", feature_property),
        ("warm-up contract", warm_up),
        ("scale smoke test", scale_smoke),
        ("wire client", wire_client),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match std::panic::catch_unwind(run) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
