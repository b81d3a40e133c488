//! Acceptance harness: one `[PASS]`/`[FAIL]` line per criterion, nonzero exit
//! when any criterion fails. Criterion 11 talks to a live endpoint and runs
//! only when `STEREOSIM_LIVE_PRESET` (or `STEREOSIM_LIVE_BASE_URL` plus
//! `STEREOSIM_LIVE_MODEL` and `STEREOSIM_LIVE_KEY_ENV`) is set; otherwise it
//! prints `[SKIP]`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};

use stereosim::ablation::{run_ablation, td_sn_stream};
use stereosim::agents::prompt::blocklist_hits;
use stereosim::batch::run_batch_in_memory;
use stereosim::config::{
    validate_config, BackendSpec, BossSpec, DemographicProfile, FcCallerMode, LlmSpec, SimConfig,
};
use stereosim::engine::{run_experiment, RunState};
use stereosim::evaluation::{association_matrix, ParsedAssessment};
use stereosim::metrics::{
    cai, compute_values, gbc, gbc_from_parts, meta_aggregate, normalized_entropy, report_for_log,
    rsi, rsi_range, sii, welch_one_sided, CategoryScores, MetricReport, RatingDistribution,
    WarmthCompetencePoint,
};
use stereosim::runlog::{MemorySink, RunLog};
use stereosim::types::{
    quadrant_task_set, AgentId, Competence, EventPayload, Outcome, RoleMappings, TaskId, TaskType,
    Warmth,
};

/// Tolerance for closed-form metric values.
const EXACT: f64 = 1e-9;
/// Outcome-rate window at p0 = 0.8 over 10,000 draws.
const RATE_WINDOW: (f64, f64) = (0.79, 0.81);
/// Null-model pooled entries must sit in 0.25 +/- this.
const NULL_ENTRY_TOL: f64 = 0.05;
const NULL_RSI: f64 = 0.3466;
const NULL_RSI_TOL: f64 = 0.05;
const CONCENTRATION_ENTRY: f64 = 0.8;
const CONCENTRATION_SHARE: f64 = 0.95;
/// Bias strength for the hierarchy comparison.
const AMPLIFY_BETA: f64 = 0.1;
const AMPLIFY_GAP: f64 = 0.1;
const ALPHA: f64 = 0.01;
const SE_LIMIT: f64 = 2.0;
const PROPERTY_CASES: u32 = 1000;
const LIVE_PARSE_RATE: f64 = 0.8;

struct Verdict {
    pass: bool,
    detail: String,
}

fn ok(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn logs(config: &SimConfig, n: u32) -> Vec<RunLog> {
    run_batch_in_memory(config, n, rayon_width())
        .into_iter()
        .map(|(seed, r)| r.unwrap_or_else(|p| panic!("seed {seed}: {p}")))
        .collect()
}

fn rayon_width() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(4)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// Criterion 1: kernel exactness against a brute-force oracle
// ---------------------------------------------------------------------------

fn oracle_rsi(scores: &[f64]) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = 0.0;
    for s in scores {
        total += s;
    }
    sorted[sorted.len() - 1] / total * (scores.len() as f64).ln()
}

fn oracle_entropy(ratings: &[u8]) -> f64 {
    let mut h = 0.0;
    for v in 1..=10u8 {
        let c = ratings.iter().filter(|r| **r == v).count();
        if c > 0 {
            let p = c as f64 / ratings.len() as f64;
            h -= p * p.ln();
        }
    }
    h / (10.0f64).ln()
}

fn oracle_ar(j: &[&str]) -> f64 {
    let mut best = 0;
    for a in j {
        best = best.max(j.iter().filter(|b| *b == a).count());
    }
    best as f64 / j.len() as f64
}

fn oracle_cai(high: &[u8], low: &[u8]) -> f64 {
    let h: f64 = high.iter().map(|r| *r as f64).sum::<f64>() / high.len() as f64;
    let l: f64 = low.iter().map(|r| *r as f64).sum::<f64>() / low.len() as f64;
    (h - l).abs() / 9.0
}

fn oracle_sii(w_raw: f64, c_raw: f64) -> f64 {
    let w = (w_raw - 5.5).abs() / 2.25;
    let c = (c_raw - 5.5).abs() / 2.25;
    w.hypot(c) / 8f64.sqrt()
}

fn criterion_1() -> Verdict {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut check = |got: f64, want: f64| {
        checked += 1;
        worst = worst.max((got - want).abs());
    };
    let rsi_fixtures: [&[f64]; 6] = [
        &[1.0, 1.0, 1.0, 1.0],
        &[0.0, 0.0, 3.0, 0.0],
        &[6.0, 2.0, 1.0, 1.0],
        &[0.5, 0.25],
        &[2.0, 2.0, 1.0, 0.0, 5.0],
        &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
    ];
    for f in rsi_fixtures {
        check(
            rsi(&CategoryScores::new(f.to_vec()).unwrap()),
            oracle_rsi(f),
        );
    }
    let anchors = [
        (
            rsi(&CategoryScores::new(vec![1.0; 4]).unwrap()),
            4f64.ln() / 4.0,
        ),
        (
            rsi(&CategoryScores::new(vec![0.0, 0.0, 3.0, 0.0]).unwrap()),
            4f64.ln(),
        ),
    ];
    let anchors_ok = anchors.iter().all(|(g, w)| (g - w).abs() < EXACT);

    let gbc_fixtures: [(&[&str], &[u8]); 5] = [
        (&["A", "A", "A"], &[5, 5, 5]),
        (&["A", "A", "B", "C"], &[7, 7, 3]),
        (&["A", "B"], &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]),
        (&["B", "B", "A", "A", "C"], &[9, 9, 9, 2]),
        (&["X"], &[10]),
    ];
    for (j, r) in gbc_fixtures {
        let dist = RatingDistribution::new(r.to_vec()).unwrap();
        check(
            gbc(j, &dist).unwrap(),
            oracle_ar(j) * (1.0 - oracle_entropy(r)),
        );
    }

    let hi = TaskType::new("hi", Warmth::Warm, Competence::Competent);
    let lo = TaskType::new("lo", Warmth::Cold, Competence::Incompetent);
    let cai_fixtures: [(&[u8], &[u8]); 5] = [
        (&[5, 6], &[6, 5]),
        (&[10, 10], &[1]),
        (&[8, 7], &[4, 5]),
        (&[1, 1, 1], &[10, 10]),
        (&[6, 7, 8, 9], &[2, 3]),
    ];
    for (h, l) in cai_fixtures {
        let got = cai(&[(hi.clone(), h.to_vec()), (lo.clone(), l.to_vec())]).unwrap();
        check(got, oracle_cai(h, l));
    }

    let sii_fixtures = [(5.5, 5.5), (10.0, 1.0), (7.75, 8.2), (3.0, 9.0)];
    for (w, c) in sii_fixtures {
        check(
            sii(&WarmthCompetencePoint::from_raw(w, c).unwrap()),
            oracle_sii(w, c),
        );
    }
    ok(
        checked == 20 && worst < EXACT && anchors_ok,
        format!("{checked} fixtures, max |diff| {worst:.1e}, anchors {anchors_ok}"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 2: outcome model
// ---------------------------------------------------------------------------

fn success_rate(p0: f64, draws: usize, seed: u64) -> f64 {
    let mut c = SimConfig::new(4, quadrant_task_set(), 1, seed);
    c.p0 = p0;
    let mut state = RunState::new(validate_config(c).unwrap());
    let task = TaskId::from("x");
    let hits = (0..draws)
        .filter(|_| state.sample_outcome(AgentId(1), &task) == Outcome::Success)
        .count();
    hits as f64 / draws as f64
}

fn criterion_2() -> Verdict {
    let r = success_rate(0.8, 10_000, 7);
    let zero = success_rate(0.0, 10_000, 7);
    let one = success_rate(1.0, 10_000, 7);
    ok(
        (RATE_WINDOW.0..=RATE_WINDOW.1).contains(&r) && zero == 0.0 && one == 1.0,
        format!("p0=0.8 -> {r:.4}; p0=0 -> {zero}; p0=1 -> {one}"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 3: one-episode delivery delay
// ---------------------------------------------------------------------------

fn delivery_violations(config: SimConfig) -> (usize, usize) {
    let log = run_experiment(config, &mut MemorySink::default()).expect("scripted run");
    let mut checked = 0;
    let mut bad = 0;
    for ep in &log.episodes {
        for e in &ep.record.events {
            if let EventPayload::Im { sent_in, .. } = &e.payload {
                checked += 1;
                if e.episode != sent_in + 1 {
                    bad += 1;
                }
            }
        }
        for a in &ep.actions {
            checked += a.action.messages.len();
            let k = ep.record.index;
            let delivered = log
                .episodes
                .iter()
                .filter(|later| later.record.index <= k)
                .flat_map(|l| l.record.events.iter())
                .filter(|e| matches!(&e.payload, EventPayload::Im { sender, sent_in, .. } if *sender == a.agent && *sent_in == k))
                .count();
            bad += delivered;
        }
    }
    (checked, bad)
}

fn criterion_3() -> Verdict {
    let mut runner = TestRunner::new(PtConfig {
        cases: 120,
        ..PtConfig::default()
    });
    let total = std::cell::Cell::new(0usize);
    let strategy = (2u32..=5, 1u32..=10, any::<u64>(), 0usize..3);
    let result = runner.run(&strategy, |(n, e, seed, policy)| {
        let backend = match policy {
            0 => BackendSpec::ScriptedUniformRandom,
            1 => BackendSpec::ScriptedConfirmationBias { beta: 0.7 },
            _ => BackendSpec::ScriptedHalo { beta: 0.5 },
        };
        let c = SimConfig::new(n, quadrant_task_set(), e, seed).with_backend(backend);
        let (checked, bad) = delivery_violations(c);
        total.set(total.get() + checked);
        prop_assert_eq!(bad, 0);
        Ok(())
    });
    ok(
        result.is_ok(),
        match &result {
            Ok(()) => format!("120 runs, {} message checks, 0 violations", total.get()),
            Err(e) => format!("120 runs, {} message checks, {e}", total.get()),
        },
    )
}

// ---------------------------------------------------------------------------
// Criterion 4: determinism
// ---------------------------------------------------------------------------

fn body_lines(log: &RunLog) -> Vec<String> {
    let mut sink = MemorySink::default();
    log.write_to(&mut sink).unwrap();
    sink.lines.into_iter().skip(1).collect()
}

fn criterion_4() -> Verdict {
    let base = SimConfig::new(4, quadrant_task_set(), 20, 99)
        .with_backend(BackendSpec::ScriptedConfirmationBias { beta: 0.5 });
    let mut a = MemorySink::default();
    let mut b = MemorySink::default();
    run_experiment(base.clone(), &mut a).unwrap();
    run_experiment(base.clone(), &mut b).unwrap();
    let same_run = a.lines.len() == b.lines.len()
        && a.lines[1..] == b.lines[1..]
        && a.lines[0].contains("\"record\":\"meta\"");

    let mut mixed = base.clone();
    mixed.backend = BackendSpec::ScriptedUniformRandom;
    mixed
        .agent_backends
        .insert("person_2".into(), BackendSpec::ScriptedHalo { beta: 0.4 });
    let one: Vec<Vec<String>> = run_batch_in_memory(&mixed, 8, 1)
        .iter()
        .map(|(_, r)| body_lines(r.as_ref().unwrap()))
        .collect();
    let four: Vec<Vec<String>> = run_batch_in_memory(&mixed, 8, 4)
        .iter()
        .map(|(_, r)| body_lines(r.as_ref().unwrap()))
        .collect();
    ok(
        same_run && one == four,
        format!(
            "single run identical: {same_run}; batch p=1 vs p=4 identical: {}",
            one == four
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 5: null-model uniformity
// ---------------------------------------------------------------------------

fn criterion_5() -> Verdict {
    let c = SimConfig::new(4, quadrant_task_set(), 20, 5_000);
    let runs = logs(&c, 200);
    let ids: Vec<String> = (0..runs.len()).map(|i| format!("run{i}")).collect();
    let rounds: Vec<(&str, _)> = runs
        .iter()
        .zip(&ids)
        .map(|(l, id)| (id.as_str(), l.evaluations.last().expect("final evaluation")))
        .collect();
    let m = association_matrix(&rounds, true).unwrap();
    let entries: Vec<f64> = m.entries().collect();
    let (lo, hi) = entries
        .iter()
        .fold((1.0f64, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
    let row_rsi: Vec<f64> = m
        .rows
        .values()
        .map(|r| rsi(&CategoryScores::new(r.clone()).unwrap()))
        .collect();
    let pooled_rsi = mean(&row_rsi);
    let entries_ok = entries.iter().all(|e| (e - 0.25).abs() <= NULL_ENTRY_TOL);
    let rsi_ok = (pooled_rsi - NULL_RSI).abs() <= NULL_RSI_TOL;
    ok(
        entries_ok && rsi_ok,
        format!("entries in [{lo:.3}, {hi:.3}], pooled RSI {pooled_rsi:.4}"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 6: emergent concentration
// ---------------------------------------------------------------------------

fn criterion_6() -> Verdict {
    let c = SimConfig::new(4, quadrant_task_set(), 20, 6_000)
        .with_backend(BackendSpec::ScriptedConfirmationBias { beta: 1.0 });
    let runs = logs(&c, 100);
    let hits = runs
        .iter()
        .filter(|l| {
            let r = l.evaluations.last().expect("final evaluation");
            association_matrix(&[("single", r)], false)
                .unwrap()
                .max_entry()
                >= CONCENTRATION_ENTRY
        })
        .count();
    ok(
        hits as f64 >= CONCENTRATION_SHARE * 100.0,
        format!("{hits}/100 runs with an entry >= {CONCENTRATION_ENTRY}"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 7: amplification under hierarchy
// ---------------------------------------------------------------------------

fn final_rsi(runs: &[RunLog]) -> Vec<f64> {
    runs.iter()
        .map(|l| report_for_log(l, "r").unwrap().rsi)
        .collect()
}

fn criterion_7() -> Verdict {
    let random = SimConfig::new(4, quadrant_task_set(), 20, 7_000)
        .with_backend(BackendSpec::ScriptedConfirmationBias { beta: AMPLIFY_BETA });
    let mut boss = random.clone().hierarchical(11);
    boss.boss = BossSpec::RepeatLastSuccess;
    let r = final_rsi(&logs(&random, 100));
    let b = final_rsi(&logs(&boss, 100));
    let w = welch_one_sided(&b, &r).unwrap();
    let gap = mean(&b) - mean(&r);
    ok(
        gap >= AMPLIFY_GAP && w.p < ALPHA,
        format!(
            "beta={AMPLIFY_BETA}: boss {:.3} vs random {:.3} (gap {gap:.3}), Welch t={:.2}, p={:.2e}",
            mean(&b),
            mean(&r),
            w.t,
            w.p
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 8: outcome invariance across modes
// ---------------------------------------------------------------------------

fn outcomes(config: &SimConfig, runs: u32) -> (usize, usize) {
    let mut s = 0;
    let mut n = 0;
    for l in logs(config, runs) {
        for ep in &l.episodes {
            for (_, _, o) in ep.record.td_events() {
                n += 1;
                s += o.is_success() as usize;
            }
        }
    }
    (s, n)
}

fn criterion_8() -> Verdict {
    let random =
        SimConfig::new(4, quadrant_task_set(), 25, 8_000).with_backend(BackendSpec::ScriptedSilent);
    let mut hier = random.clone().hierarchical(2);
    hier.seed = 18_000;
    hier.boss = BossSpec::SuccessRateGreedy;
    let (s1, n1) = outcomes(&random, 100);
    let (s2, n2) = outcomes(&hier, 100);
    let (p1, p2) = (s1 as f64 / n1 as f64, s2 as f64 / n2 as f64);
    let p = (s1 + s2) as f64 / (n1 + n2) as f64;
    let se = (p * (1.0 - p) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = (p1 - p2).abs() / se;

    let mut matched = hier.clone();
    matched.seed = random.seed;
    let (s3, n3) = outcomes(&matched, 100);
    ok(
        n1 == 10_000 && n2 == 10_000 && z <= SE_LIMIT && (s3, n3) == (s1, n1),
        format!(
            "random {p1:.4} (n={n1}) vs hierarchical {p2:.4} (n={n2}): |diff|/SE = {z:.2}; matched seeds identical: {}",
            (s3, n3) == (s1, n1)
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 9: ablation pairing
// ---------------------------------------------------------------------------

fn profiles() -> Vec<DemographicProfile> {
    [
        ("Maria Lopez", 34, "female", "short dark hair, glasses"),
        ("James Carter", 52, "male", "grey beard, tall"),
        ("Aiko Tanaka", 27, "female", "long black hair"),
        ("Samuel Okoye", 41, "male", "bald, athletic build"),
    ]
    .into_iter()
    .map(|(name, age, gender, appearance)| DemographicProfile {
        name: name.into(),
        age,
        gender: gender.into(),
        appearance: appearance.into(),
    })
    .collect()
}

fn criterion_9() -> Verdict {
    let base = SimConfig::new(4, quadrant_task_set(), 12, 9_000)
        .with_backend(BackendSpec::ScriptedConfirmationBias { beta: 0.6 });
    let (n, d) = run_ablation(
        &base,
        profiles(),
        &mut MemorySink::default(),
        &mut MemorySink::default(),
    )
    .expect("ablation pair");
    let streams = td_sn_stream(&n) == td_sn_stream(&d) && !td_sn_stream(&n).is_empty();
    let seeds = n.meta.seed == d.meta.seed;
    let neutral_hits: usize = n
        .meta
        .system_prompts
        .values()
        .map(|p| blocklist_hits(p).len())
        .sum();
    let fields: Vec<String> = profiles()
        .into_iter()
        .flat_map(|p| [p.name, p.age.to_string(), p.gender, p.appearance])
        .collect();
    let demo_ok = d.meta.system_prompts.len() == 4
        && d.meta
            .system_prompts
            .values()
            .all(|prompt| fields.iter().all(|f| prompt.contains(f.as_str())));
    ok(
        streams && seeds && neutral_hits == 0 && demo_ok && n.meta.system_prompts.len() == 4,
        format!(
            "Td/Sn identical: {streams}; seeds equal: {seeds}; neutral blocklist hits: {neutral_hits}; demographic prompts embed all fields: {demo_ok}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 10: duality and range properties
// ---------------------------------------------------------------------------

fn parsed_strategy() -> impl Strategy<Value = Vec<ParsedAssessment>> {
    let one = (
        1u32..=4,
        1u32..=4,
        prop::collection::btree_set(0usize..4, 0..=4),
        prop::collection::vec(1u8..=10, 4),
    );
    prop::collection::vec(one, 1..16).prop_map(|items| {
        let tasks = quadrant_task_set();
        items
            .into_iter()
            .filter(|(e, s, _, _)| e != s)
            .map(|(e, s, endorsed, ratings)| ParsedAssessment {
                evaluator: AgentId(e),
                subject: AgentId(s),
                endorsed: endorsed.into_iter().map(|i| tasks[i].id.clone()).collect(),
                ratings: tasks.iter().map(|t| t.id.clone()).zip(ratings).collect(),
                warnings: vec![],
            })
            .collect()
    })
}

fn relabel(parsed: &[ParsedAssessment], perm: &[u32]) -> Vec<ParsedAssessment> {
    parsed
        .iter()
        .map(|p| ParsedAssessment {
            evaluator: AgentId(perm[(p.evaluator.0 - 1) as usize]),
            subject: AgentId(perm[(p.subject.0 - 1) as usize]),
            ..p.clone()
        })
        .collect()
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-9,
        (None, None) => true,
        _ => false,
    }
}

fn criterion_10() -> Verdict {
    let cfg = || PtConfig {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..PtConfig::default()
    };
    let mut failures = Vec::new();
    let mut record = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    let duality = (prop::collection::vec((1u32..=6, 0usize..5), 0..30)).prop_map(|pairs| {
        pairs
            .into_iter()
            .map(|(a, t)| (AgentId(a), TaskId::new(format!("t{t}"))))
            .collect::<Vec<_>>()
    });
    record(
        "duality",
        TestRunner::new(cfg())
            .run(&duality, |pairs| {
                let m = RoleMappings::from_endorsements(pairs.clone(), BTreeMap::new());
                prop_assert!(m.check().is_ok());
                for a in 1..=6 {
                    for t in 0..5 {
                        let (a, t) = (AgentId(a), TaskId::new(format!("t{t}")));
                        let fwd = m.roles_of(a).is_some_and(|r| r.contains(&t));
                        let back = m.agents_for(&t).is_some_and(|s| s.contains(&a));
                        prop_assert_eq!(fwd, back);
                        prop_assert_eq!(fwd, pairs.contains(&(a, t.clone())));
                    }
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let scores = prop::collection::vec(0.0f64..100.0, 2..12)
        .prop_filter("positive total", |v| v.iter().sum::<f64>() > 0.0);
    record(
        "rsi range and scale invariance",
        TestRunner::new(cfg())
            .run(&(scores, 0.001f64..1000.0), |(v, lambda)| {
                let r = rsi(&CategoryScores::new(v.clone()).unwrap());
                let (lo, hi) = rsi_range(v.len());
                prop_assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
                let scaled: Vec<f64> = v.iter().map(|x| x * lambda).collect();
                let r2 = rsi(&CategoryScores::new(scaled).unwrap());
                prop_assert!((r - r2).abs() < 1e-9);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    record(
        "gbc monotonicity",
        TestRunner::new(cfg())
            .run(
                &(0.0f64..1.0, 0.0f64..0.999, 0.001f64..1.0, 0.0f64..0.999),
                |(a1, ne, ar, dn)| {
                    let a2 = (a1 + (1.0 - a1) * 0.5 + 1e-6).min(1.0);
                    prop_assert!(a2 > a1);
                    prop_assert!(gbc_from_parts(a2, ne) > gbc_from_parts(a1, ne));
                    let n1 = dn * ne;
                    if ne > n1 {
                        prop_assert!(gbc_from_parts(ar, ne) < gbc_from_parts(ar, n1));
                    }
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );

    let ratings = || prop::collection::vec(1u8..=10, 1..20);
    record(
        "cai symmetry and range",
        TestRunner::new(cfg())
            .run(&(ratings(), ratings()), |(h, l)| {
                let hi = TaskType::new("a", Warmth::Warm, Competence::Competent);
                let lo = TaskType::new("b", Warmth::Cold, Competence::Incompetent);
                let x = cai(&[(hi.clone(), h.clone()), (lo.clone(), l.clone())]).unwrap();
                let y = cai(&[(hi, l), (lo, h)]).unwrap();
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&x));
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    record(
        "gbc, ne and sii ranges",
        TestRunner::new(cfg())
            .run(
                &(
                    ratings(),
                    prop::collection::vec(0u8..4, 1..10),
                    1.0f64..=10.0,
                    1.0f64..=10.0,
                ),
                |(r, j, w, c)| {
                    let d = RatingDistribution::new(r).unwrap();
                    let ne = normalized_entropy(&d);
                    prop_assert!((0.0..=1.0).contains(&ne));
                    let g = gbc(&j, &d).unwrap();
                    prop_assert!((0.0..=1.0).contains(&g));
                    let s = sii(&WarmthCompetencePoint::from_raw(w, c).unwrap());
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );

    let perm = Just(vec![1u32, 2, 3, 4]).prop_shuffle();
    record(
        "report ranges and relabeling invariance",
        TestRunner::new(cfg())
            .run(&(parsed_strategy(), perm), |(parsed, perm)| {
                let tasks = quadrant_task_set();
                let Ok(v) = compute_values(&parsed, &tasks) else {
                    return Ok(());
                };
                let (lo, hi) = rsi_range(tasks.len());
                prop_assert!(v.rsi >= lo - 1e-12 && v.rsi <= hi + 1e-12);
                for x in [v.gbc, v.cai, Some(v.sii)].into_iter().flatten() {
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&x));
                }
                let u = compute_values(&relabel(&parsed, &perm), &tasks).unwrap();
                prop_assert!((v.rsi - u.rsi).abs() < 1e-9 && (v.sii - u.sii).abs() < 1e-9);
                prop_assert!(close(v.gbc, u.gbc) && close(v.cai, u.cai));
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    record(
        "meta_aggregate mean",
        TestRunner::new(cfg())
            .run(&prop::collection::vec(0.0f64..1.0, 2..40), |xs| {
                let reports: Vec<MetricReport> = xs
                    .iter()
                    .enumerate()
                    .map(|(i, x)| MetricReport {
                        run_id: i.to_string(),
                        seed: i as u64,
                        episode: 1,
                        n_categories: 4,
                        rsi: 4f64.ln() / 4.0 + x,
                        gbc: Some(*x),
                        cai: None,
                        sii: *x,
                        agreement_ratio: None,
                        normalized_entropy: None,
                        per_episode: vec![],
                        inputs_digest: String::new(),
                    })
                    .collect();
                let agg = meta_aggregate(&reports).unwrap();
                let brute = xs.iter().sum::<f64>() / xs.len() as f64;
                prop_assert!((agg.sii.mean - brute).abs() < 1e-12);
                prop_assert!(agg.cai.is_none());
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    ok(
        failures.is_empty(),
        if failures.is_empty() {
            format!("7 properties x {PROPERTY_CASES} cases")
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// Criterion 11: live smoke test
// ---------------------------------------------------------------------------

fn live_spec() -> Option<LlmSpec> {
    let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
    let mut spec = LlmSpec {
        fc_caller: FcCallerMode::Llm,
        ..LlmSpec::default()
    };
    if let Some(p) = env("STEREOSIM_LIVE_PRESET") {
        spec.preset = Some(p);
    } else {
        spec.base_url = Some(env("STEREOSIM_LIVE_BASE_URL")?);
        spec.model = Some(env("STEREOSIM_LIVE_MODEL")?);
        spec.api_key_env = Some(env("STEREOSIM_LIVE_KEY_ENV")?);
    }
    Some(spec)
}

fn criterion_11() -> Option<Verdict> {
    let spec = live_spec()?;
    let mut c = SimConfig::new(3, quadrant_task_set()[..3].to_vec(), 3, 11)
        .with_backend(BackendSpec::LlmHttp(spec));
    c.retry.max_attempts = 4;
    let log = match run_experiment(c, &mut MemorySink::default()) {
        Ok(l) => l,
        Err(p) => return Some(ok(false, format!("run failed: {p}"))),
    };
    let actions: Vec<_> = log.episodes.iter().flat_map(|e| &e.actions).collect();
    let parsed = actions
        .iter()
        .filter(|a| a.failure.is_none() && a.issues.iter().all(|i| !i.contains("unparseable")))
        .count();
    let rate = parsed as f64 / actions.len().max(1) as f64;
    let round_trip = RunLog::parse(&body_and_meta(&log))
        .map(|l| l == log)
        .unwrap_or(false);
    Some(ok(
        log.is_complete() && rate >= LIVE_PARSE_RATE && round_trip,
        format!(
            "{parsed}/{} outputs parsed ({rate:.2}); complete log: {}",
            actions.len(),
            log.is_complete()
        ),
    ))
}

fn body_and_meta(log: &RunLog) -> String {
    let mut sink = MemorySink::default();
    log.write_to(&mut sink).unwrap();
    sink.lines.join("\n")
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: Vec<(u32, &str, Duration, fn() -> Verdict)> = vec![
        (
            1,
            "metric kernel exactness",
            Duration::from_secs(1),
            criterion_1,
        ),
        (2, "outcome model", Duration::from_secs(5), criterion_2),
        (3, "delivery delay", Duration::from_secs(30), criterion_3),
        (4, "determinism", Duration::from_secs(30), criterion_4),
        (
            5,
            "null-model uniformity",
            Duration::from_secs(120),
            criterion_5,
        ),
        (
            6,
            "emergent concentration",
            Duration::from_secs(120),
            criterion_6,
        ),
        (
            7,
            "amplification under hierarchy",
            Duration::from_secs(300),
            criterion_7,
        ),
        (
            8,
            "outcome invariance across modes",
            Duration::from_secs(10),
            criterion_8,
        ),
        (9, "ablation pairing", Duration::from_secs(10), criterion_9),
        (
            10,
            "duality and range properties",
            Duration::from_secs(60),
            criterion_10,
        ),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        let t = Instant::now();
        let r = f();
        let el = t.elapsed();
        let pass = r.pass && el <= budget;
        failed += !pass as u32;
        println!(
            "[{}] criterion {id:>2} {name}: {} ({:.2}s, budget {}s)",
            if pass { "PASS" } else { "FAIL" },
            r.detail,
            el.as_secs_f64(),
            budget.as_secs()
        );
    }
    let t = Instant::now();
    match criterion_11() {
        None => println!(
            "[SKIP] criterion 11 live smoke test: set STEREOSIM_LIVE_PRESET (or STEREOSIM_LIVE_BASE_URL, STEREOSIM_LIVE_MODEL, STEREOSIM_LIVE_KEY_ENV) to run"
        ),
        Some(r) => {
            failed += !r.pass as u32;
            println!(
                "[{}] criterion 11 live smoke test: {} ({:.2}s)",
                if r.pass { "PASS" } else { "FAIL" },
                r.detail,
                t.elapsed().as_secs_f64()
            );
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
