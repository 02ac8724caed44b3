//! Acceptance gate. Runs every primary criterion and prints one PASS/FAIL
//! line per criterion; exits non-zero when any criterion fails.
//!
//! Run with `cargo test -p mirrorsim-core --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mirrorsim::agents::{AgentHandle, AgentKind, MirrorConfusedAgent, OracleAgent, RandomAgent};
use mirrorsim::assets::{Rgb, Setting};
use mirrorsim::episode::{run_episode, EpisodeConfig, EpisodeRecord, RecordOutcome};
use mirrorsim::generate::{generate_scenes, SceneConfig};
use mirrorsim::geometry::{manhattan_distance, Vec3i};
use mirrorsim::metrics::{
    cognitive_stability, fcr, pcr, sir, tsr, Group, MetricSet, ScoreField, ScoreGrid,
};
use mirrorsim::prompt::{build_prompt, Level};
use mirrorsim::reflection::reflect_point;
use mirrorsim::render::{mirror_mask, render_frame, validate_mark_hidden, RenderConfig};
use mirrorsim::report::{make_report, read_records};
use mirrorsim::run::{
    episode_seed, run_benchmark_with, DefaultAgentFactory, RunConfig, RECORDS_FILE, SCENES_FILE,
};
use mirrorsim::scene::{SceneSpec, SceneState};

type Q = Ratio<i64>;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

// ---------------------------------------------------------------- metrics

struct OracleMetrics {
    tsr: Q,
    sir: Option<Q>,
    fcr: Option<Q>,
    pcr: Option<Q>,
}

/// Metric definitions evaluated in exact rational arithmetic.
fn rational_metrics(d: &[i64], d_th: i64) -> OracleMetrics {
    let t = d.len() as i64 - 1;
    let (d0, dt) = (d[0], d[d.len() - 1]);
    let success = dt <= d_th;
    let tsr = if success { Q::from(1) } else { Q::from(0) };
    let sir = (t > 0).then(|| {
        let dec = d.windows(2).filter(|w| w[1] < w[0]).count() as i64;
        Q::new(dec, t)
    });
    let progress = |reached: i64| {
        (d0 > d_th).then(|| {
            if success {
                Q::from(1)
            } else {
                Q::from(1) - Q::new(reached - d_th, d0 - d_th)
            }
        })
    };
    let dmin = *d.iter().min().unwrap();
    OracleMetrics {
        tsr,
        sir,
        fcr: progress(dt),
        pcr: progress(dmin),
    }
}

fn all_trajectories(max_t: usize, max_d: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<i64>> = (0..=max_d).map(|d| vec![d]).collect();
    for _ in 0..=max_t {
        let mut next = Vec::new();
        for tr in frontier {
            let last = *tr.last().unwrap();
            if tr.len() <= max_t {
                for step in -1..=1 {
                    let v = last + step;
                    if (0..=max_d).contains(&v) {
                        let mut t = tr.clone();
                        t.push(v);
                        next.push(t);
                    }
                }
            }
            out.push(tr);
        }
        frontier = next;
    }
    out
}

fn criterion_metric_oracle() -> Verdict {
    let start = Instant::now();
    let d_th = 1;
    let trajectories = all_trajectories(6, 4);
    let mut mismatches = Vec::new();
    for tr in &trajectories {
        let du: Vec<u32> = tr.iter().map(|&x| x as u32).collect();
        let o = rational_metrics(tr, d_th as i64);
        let got = (
            tsr(&du, d_th).ok(),
            sir(&du).ok(),
            fcr(&du, d_th).ok(),
            pcr(&du, d_th).ok(),
        );
        let want = (
            Some(to_f64(o.tsr)),
            o.sir.map(to_f64),
            o.fcr.map(to_f64),
            o.pcr.map(to_f64),
        );
        if got != want {
            mismatches.push(format!("{tr:?}: got {got:?}, want {want:?}"));
        }
    }
    let elapsed = start.elapsed();
    let ok = mismatches.is_empty() && elapsed < Duration::from_secs(10);
    let mut detail = format!(
        "{} trajectories (T<=6, d in [0,4], |dd|<=1), {} mismatches, {}",
        trajectories.len(),
        mismatches.len(),
        secs(elapsed)
    );
    if let Some(m) = mismatches.first() {
        detail.push_str(&format!("; first: {m}"));
    }
    verdict(ok, detail)
}

// ---------------------------------------------------------------- scenes

fn default_scenes() -> Vec<SceneSpec> {
    let cfg = SceneConfig::default();
    generate_scenes(&cfg.pool(), &cfg.sampling, 0).expect("default scene generation")
}

fn replay(spec: &SceneSpec, rec: &EpisodeRecord) -> Vec<Vec3i> {
    let mut state = SceneState::new(spec);
    let mut path = vec![state.hand_pos];
    for a in &rec.actions {
        match a {
            Some(a) => {
                state.apply_action(*a);
            }
            None => state.skip_step(),
        }
        path.push(state.hand_pos);
    }
    path
}

fn criterion_oracle_upper_bound(scenes: &[SceneSpec]) -> Verdict {
    let start = Instant::now();
    let cfg = EpisodeConfig::default();
    let mut episodes = 0;
    let mut failures = Vec::new();
    for spec in scenes {
        for level in Level::ALL {
            let mut agent = OracleAgent::new("oracle");
            let rec = run_episode(spec, level, &mut agent, &cfg).expect("oracle episode");
            episodes += 1;
            let m = MetricSet::from_distances(&rec.distances, cfg.d_th).expect("metrics");
            let expected_len = (spec.initial_distance() - cfg.d_th) as usize;
            let perfect = m.tsr == 1.0 && m.sir == 1.0 && m.fcr == 1.0 && m.pcr == 1.0;
            if !perfect
                || rec.actions.len() != expected_len
                || rec.outcome != RecordOutcome::Success
            {
                failures.push(format!(
                    "{}: {m:?}, {} steps",
                    rec.episode_id,
                    rec.actions.len()
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    let ok =
        failures.is_empty() && elapsed < Duration::from_secs(120) && episodes == scenes.len() * 4;
    verdict(
        ok,
        format!(
            "{episodes} episodes, {} not perfect or not of length d0-d_th, {}{}",
            failures.len(),
            secs(elapsed),
            failures
                .first()
                .map(|f| format!("; first: {f}"))
                .unwrap_or_default()
        ),
    )
}

fn criterion_random_analytics(scenes: &[SceneSpec]) -> Verdict {
    // Per stratum k = number of nonzero components of (mark - hand):
    // [steps, improving steps].
    let mut strata = [[0u64; 2]; 4];
    let cfg = EpisodeConfig::default();
    let record = |spec: &SceneSpec, seed: u64, strata: &mut [[u64; 2]; 4]| {
        let mut agent = RandomAgent::new("random", episode_seed(seed, &spec.scene_id));
        let rec = run_episode(spec, Level::L0, &mut agent, &cfg).expect("random episode");
        let path = replay(spec, &rec);
        for (i, w) in rec.distances.windows(2).enumerate() {
            let k = (spec.mark_anchor - path[i]).nonzero_components();
            strata[k][0] += 1;
            strata[k][1] += u64::from(w[1] < w[0]);
        }
    };
    let enough = |s: &[[u64; 2]; 4], k: usize| s[k][0] >= 50_000;
    let mut seed = 0u64;
    while !(enough(&strata, 2) && enough(&strata, 3)) && seed < 1_000 {
        for spec in scenes {
            record(spec, seed, &mut strata);
        }
        seed += 1;
    }
    // Single-axis offsets are rare from the generated starts; top the
    // stratum up with episodes starting on an axis through the mark.
    let on_axis: Vec<SceneSpec> = scenes
        .iter()
        .flat_map(|s| {
            [
                Vec3i::new(6, 0, 0),
                Vec3i::new(0, -6, 0),
                Vec3i::new(0, 0, 6),
            ]
            .into_iter()
            .map(move |off| SceneSpec {
                hand_init: s.workspace.clamp(s.mark_anchor + off),
                ..s.clone()
            })
        })
        .filter(|s| s.initial_distance() > cfg.d_th)
        .collect();
    while !enough(&strata, 1) && seed < 2_000 {
        for spec in &on_axis {
            record(spec, seed, &mut strata);
        }
        seed += 1;
    }
    let total: u64 = strata.iter().map(|c| c[0]).sum();
    let mut ok = total >= 100_000 && (1..4).all(|k| enough(&strata, k));
    let mut parts = Vec::new();
    for (k, c) in strata.iter().enumerate().skip(1) {
        let freq = c[1] as f64 / c[0] as f64;
        let expected = k as f64 / 6.0;
        ok &= (freq - expected).abs() <= 0.01;
        parts.push(format!("k={k}: {freq:.4} vs {expected:.4} (n={})", c[0]));
    }
    verdict(ok, format!("{total} steps; {}", parts.join(", ")))
}

fn criterion_mirror_confusion(scenes: &[SceneSpec]) -> Verdict {
    let cfg = EpisodeConfig::default();
    let mut bad = Vec::new();
    let mut episodes = 0;
    for spec in scenes {
        let virtual_mark = reflect_point(spec.mark_anchor, &spec.mirror);
        for level in Level::ALL {
            let mut agent = MirrorConfusedAgent::new("mirror-confused");
            let rec = run_episode(spec, level, &mut agent, &cfg).expect("mirror-confused episode");
            episodes += 1;
            let path = replay(spec, &rec);
            let min_real = path
                .iter()
                .map(|&p| manhattan_distance(p, spec.mark_anchor))
                .min()
                .unwrap();
            let min_virtual = path
                .iter()
                .map(|&p| manhattan_distance(p, virtual_mark))
                .min()
                .unwrap();
            let t = tsr(&rec.distances, cfg.d_th).unwrap();
            if t != 0.0 || min_real <= cfg.d_th || min_virtual > cfg.d_th {
                bad.push(format!(
                    "{}: TSR {t}, min real {min_real}, min virtual {min_virtual}",
                    rec.episode_id
                ));
            }
        }
    }
    verdict(
        bad.is_empty(),
        format!(
            "{episodes} episodes; TSR=0, real distance > d_th and virtual distance <= d_th in all but {}{}",
            bad.len(),
            bad.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn is_line_subsequence(small: &str, big: &str) -> bool {
    let mut it = big.lines();
    small.lines().all(|l| it.any(|b| b == l))
}

fn criterion_ablation(scenes: &[SceneSpec]) -> Verdict {
    let mut problems = Vec::new();
    let cfg = EpisodeConfig::default();
    for spec in scenes {
        let before = serde_json::to_vec(spec).unwrap();
        let mut bundles = Vec::new();
        for level in Level::ALL {
            bundles.push(build_prompt(level, spec).expect("prompt"));
            let mut agent = OracleAgent::new("oracle");
            run_episode(spec, level, &mut agent, &cfg).expect("episode");
            if serde_json::to_vec(spec).unwrap() != before {
                problems.push(format!("{}: scene changed at {level}", spec.scene_id));
            }
        }
        for pair in bundles.windows(2) {
            let (hi, lo) = (&pair[0], &pair[1]);
            let strict = lo.included_blocks.is_subset(&hi.included_blocks)
                && lo.included_blocks.len() < hi.included_blocks.len();
            if !strict || !is_line_subsequence(&lo.full_text(), &hi.full_text()) {
                problems.push(format!(
                    "{}: {} not a strict reduction of {}",
                    spec.scene_id, lo.level, hi.level
                ));
            }
        }
    }

    // The scene file written by runs over disjoint level sets is byte-identical.
    let dir = tempfile::tempdir().unwrap();
    let mut written = Vec::new();
    for (i, level) in [Level::L0, Level::L3].into_iter().enumerate() {
        let cfg = RunConfig {
            run_id: format!("ablation-{i}"),
            output_dir: dir.path().to_path_buf(),
            levels: vec![level],
            agents: vec![AgentHandle::new("oracle", AgentKind::Oracle)],
            ..RunConfig::default()
        };
        run_benchmark_with(&cfg, &scenes[..12], &DefaultAgentFactory::new(&cfg.agents)).unwrap();
        written.push(std::fs::read(cfg.run_dir().join(SCENES_FILE)).unwrap());
    }
    if written[0] != written[1] {
        problems.push("scene files differ between L0 and L3 runs".into());
    }
    verdict(
        problems.is_empty(),
        format!(
            "{} scenes: blocks strictly nested L3<L2<L1<L0, scene JSON identical across levels; {} problems{}",
            scenes.len(),
            problems.len(),
            problems.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- stability

fn grid_from(scores: &[[f64; 4]]) -> ScoreGrid {
    let mut g = ScoreGrid::new();
    for (i, s) in scores.iter().enumerate() {
        for (level, &v) in Level::ALL.iter().zip(s) {
            g.insert(
                "a",
                *level,
                &format!("s{i}"),
                Setting::Human,
                MetricSet::new(v, v, v, v),
            )
            .unwrap();
        }
    }
    g
}

fn criterion_stability() -> Verdict {
    let cs = |scores: &[[f64; 4]]| {
        cognitive_stability(&grid_from(scores), "a", ScoreField::Avg).unwrap()
    };
    let down = cs(&[[1.0, 0.75, 0.5, 0.25], [0.9, 0.8, 0.7, 0.0]]);
    let flat = cs(&[[0.5; 4], [0.2; 4]]);
    let up = cs(&[[0.0, 0.1, 0.2, 0.3]]);
    let mut ok = down == 3.0 && flat == 0.0 && up == -3.0;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut random_mismatch = 0;
    let trials = 2_000;
    for _ in 0..trials {
        let n = rng.random_range(1..=12);
        // Coarse values so ties occur often.
        let scores: Vec<[f64; 4]> = (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(0..4) as f64 / 4.0))
            .collect();
        let (mut drops, mut rises) = (0i64, 0i64);
        for s in &scores {
            for w in s.windows(2) {
                drops += i64::from(w[0] > w[1]);
                rises += i64::from(w[0] < w[1]);
            }
        }
        let want = Q::from(3) * Q::new(drops - rises, 3 * n as i64);
        let got = cs(&scores);
        if !(-3.0..=3.0).contains(&got) || got != to_f64(want) {
            random_mismatch += 1;
        }
    }
    ok &= random_mismatch == 0;
    verdict(
        ok,
        format!("extremes {down} / {flat} / {up}; {trials} random grids, {random_mismatch} outside [-3,3] or off the sign-count oracle"),
    )
}

// ---------------------------------------------------------------- runs

fn reference_agents() -> Vec<AgentHandle> {
    vec![
        AgentHandle::new("oracle", AgentKind::Oracle),
        AgentHandle::new("random", AgentKind::Random),
        AgentHandle::new("mirror-confused", AgentKind::MirrorConfused),
    ]
}

fn criterion_determinism(scenes: &[SceneSpec], dir: &std::path::Path) -> Verdict {
    let mut files = Vec::new();
    for id in ["det-a", "det-b"] {
        let mut cfg = RunConfig {
            run_id: id.into(),
            output_dir: dir.to_path_buf(),
            agents: reference_agents(),
            seed: 2024,
            parallelism: 4,
            ..RunConfig::default()
        };
        cfg.episode.canonical = true;
        run_benchmark_with(&cfg, scenes, &DefaultAgentFactory::new(&cfg.agents)).unwrap();
        files.push(std::fs::read(cfg.run_dir().join(RECORDS_FILE)).unwrap());
    }
    let lines = files[0].iter().filter(|&&b| b == b'\n').count();
    verdict(
        files[0] == files[1] && lines == scenes.len() * 4 * 3,
        format!(
            "two runs, {lines} records each, byte-identical: {}",
            files[0] == files[1]
        ),
    )
}

fn criterion_renderer(scenes: &[SceneSpec]) -> Verdict {
    let hidden = scenes.iter().filter(|s| validate_mark_hidden(s)).count();
    let untinted = RenderConfig {
        mirror_tint: None,
        ..RenderConfig::default()
    };
    let mut stray = Vec::new();
    let mut reflected_frames = 0;
    let mut frames = 0;
    for spec in scenes {
        let color: Rgb = spec.mark.shape[0].color();
        let virtual_mark = reflect_point(spec.mark_anchor, &spec.mirror);
        let off = spec.hand_init - spec.mark_anchor;
        let near = spec.mark_anchor + Vec3i::new(off.x.signum(), off.y.signum(), off.z.signum());
        for cfg in [&untinted, &RenderConfig::default()] {
            let mask = mirror_mask(spec, cfg).unwrap().unwrap_or_default();
            for hand in [spec.hand_init, near, virtual_mark] {
                let frame = render_frame(spec, hand, cfg).unwrap();
                frames += 1;
                let mut any = false;
                for (x, y) in frame.pixels_of(color) {
                    any = true;
                    if !mask
                        .get((y * frame.width + x) as usize)
                        .copied()
                        .unwrap_or(false)
                    {
                        stray.push(format!("{} hand {hand:?} pixel ({x},{y})", spec.scene_id));
                        break;
                    }
                }
                reflected_frames += usize::from(any);
            }
        }
    }
    let ok = hidden == scenes.len() && stray.is_empty() && reflected_frames > 0;
    verdict(
        ok,
        format!(
            "mark hidden in the direct view for {hidden}/{} scenes; {frames} full renders, {} with mark pixels outside the mirror{}",
            scenes.len(),
            stray.len(),
            stray.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_reproducibility(scenes: &[SceneSpec], dir: &std::path::Path) -> Verdict {
    let mut cfg = RunConfig {
        run_id: "tables".into(),
        output_dir: dir.to_path_buf(),
        agents: reference_agents(),
        ..RunConfig::default()
    };
    cfg.episode.canonical = true;
    run_benchmark_with(&cfg, scenes, &DefaultAgentFactory::new(&cfg.agents)).unwrap();
    let records = read_records(&cfg.run_dir().join(RECORDS_FILE)).unwrap();
    let report = make_report(&records, &[], ScoreField::Avg).unwrap();

    let mut problems = Vec::new();
    if report.per_level.len() != 4
        || report.per_level.iter().map(|t| t.level).collect::<Vec<_>>() != Level::ALL.map(Some)
    {
        problems.push("per-level tables are not L0..L3".to_string());
    }
    for table in report.per_level.iter().chain([&report.averaged]) {
        let agents: BTreeSet<&str> = table.rows.iter().map(|r| r.agent.as_str()).collect();
        if agents.len() != 3
            || table
                .rows
                .iter()
                .any(|r| Group::ALL.iter().any(|g| r.group(*g).is_none()))
        {
            problems.push(format!("{}: incomplete rows", table.title));
        }
    }
    // Ranking key recomputed from the per-level overall AVG.
    let mut keys: BTreeMap<&str, f64> = BTreeMap::new();
    for table in &report.per_level {
        for row in &table.rows {
            *keys.entry(&row.agent).or_default() += row.overall.unwrap().avg / 4.0;
        }
    }
    let order: Vec<&str> = report
        .averaged
        .rows
        .iter()
        .map(|r| r.agent.as_str())
        .collect();
    let mut expected: Vec<(&str, f64)> = keys.iter().map(|(a, k)| (*a, *k)).collect();
    expected.sort_by(|a, b| b.1.total_cmp(&a.1));
    if order != expected.iter().map(|e| e.0).collect::<Vec<_>>() {
        problems.push(format!("ranking {order:?} differs from {expected:?}"));
    }
    let oracle = report
        .averaged
        .rows
        .iter()
        .find(|r| r.agent == "oracle")
        .unwrap();
    if Group::ALL.iter().any(|g| {
        let m = oracle.group(*g).unwrap();
        (m.tsr, m.sir, m.fcr, m.pcr, m.avg) != (1.0, 1.0, 1.0, 1.0, 1.0)
    }) {
        problems.push("oracle row is not all ones".into());
    }
    if report.level_setting.len() != 5 || report.stability.len() != 3 {
        problems.push("level x setting or stability table has the wrong shape".into());
    }
    let csv_lines = report.to_csv().lines().count();
    if csv_lines != 1 + 5 * 3 * 3 {
        problems.push(format!("csv has {csv_lines} lines"));
    }
    verdict(
        problems.is_empty(),
        format!(
            "reproduced: table layouts (per level, averaged, level x setting, stability) and the ranking rule, \
             with reference-agent rows; not reproduced: scores of evaluated models, which need access to those models. \
             Ranking {order:?}{}",
            problems.first().map(|p| format!("; problem: {p}")).unwrap_or_default()
        ),
    )
}

fn main() {
    // Under `cargo test` the harness passes filter flags; only a filter that
    // excludes this suite by name skips it.
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }

    let start = Instant::now();
    let scenes = default_scenes();
    println!(
        "generated {} scenes in {}",
        scenes.len(),
        secs(start.elapsed())
    );
    let dir = tempfile::tempdir().expect("temp dir");

    type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;
    let checks: Vec<(&str, Check)> = vec![
        (
            "metric formulas match the exact rational oracle",
            Box::new(criterion_metric_oracle),
        ),
        (
            "oracle agent scores 1 on every metric with d0-d_th steps",
            Box::new(|| criterion_oracle_upper_bound(&scenes)),
        ),
        (
            "random agent improves with frequency k/6",
            Box::new(|| criterion_random_analytics(&scenes)),
        ),
        (
            "mirror-confused agent reaches the virtual mark only",
            Box::new(|| criterion_mirror_confusion(&scenes)),
        ),
        (
            "prompt ablation removes blocks only",
            Box::new(|| criterion_ablation(&scenes)),
        ),
        (
            "cognitive stability extremes and bounds",
            Box::new(criterion_stability),
        ),
        (
            "identical runs give byte-identical records",
            Box::new(|| criterion_determinism(&scenes, dir.path())),
        ),
        (
            "mark hidden directly and visible only in the mirror",
            Box::new(|| criterion_renderer(&scenes)),
        ),
        (
            "reproducibility of report layout and ranking",
            Box::new(|| criterion_reproducibility(&scenes, dir.path())),
        ),
    ];

    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        failed += usize::from(!v.pass);
        println!(
            "{} [{}] {name}: {} ({})",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            secs(t.elapsed())
        );
    }
    println!(
        "{} of {} criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
