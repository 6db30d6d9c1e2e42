//! Acceptance suite: one check per primary criterion, each reported as a
//! PASS/FAIL line. Run with `cargo test -p coachlab --test acceptance -- --nocapture`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use coachlab_core::creativity::{build_portfolio, internal_diversity, originality, MetricError, ParticipantPortfolio};
use coachlab_core::engagement::{question_stats, segment_quarters, session_behavior};
use coachlab_core::persona::{build_payload, resolve_persona, summarize_state, Condition, PersonaId, DEFAULT_WINDOW};
use coachlab_core::session::{
    apply_exclusions, ExclusionRule, Message, Session, SessionStatus, Speaker, DEFAULT_TASK, SESSION_SCHEMA_VERSION,
};
use coachlab_core::survey::{reverse_item, score_bfi, trait_quartiles, KeyingTable, Trait, BFI_ITEMS};
use coachlab_core::synth::{synth_corpus, SynthSpec};
use coachlab_stats::dist::{chi_squared_sf, t_cdf};
use coachlab_stats::{chi_square_2x2, hedges_g, one_sample_t, welch_t, ContingencyTable, GroupSummary};

fn near(got: f64, want: f64, tol: f64, what: &str) {
    assert!((got - want).abs() <= tol, "{what}: got {got}, want {want} ± {tol}");
}

fn g(n: usize, m: f64, sd: f64) -> GroupSummary {
    GroupSummary::new(n, m, sd).unwrap()
}

// ---- statistics ----------------------------------------------------------

fn statistics_reproduction() {
    let control = g(29, 2.72, 1.10);
    let treatment = g(66, 1.80, 1.01);
    near(one_sample_t(&control, 2.0).unwrap().statistic, 3.55, 0.05, "t control");
    near(one_sample_t(&treatment, 2.0).unwrap().statistic, -1.58, 0.05, "t treatment");
    near(hedges_g(&treatment, &control).unwrap(), -0.88, 0.01, "hedges g");
    near(welch_t(&treatment, &control).unwrap().p_value, 0.0003, 0.0002, "welch p");
}

fn chi_square_reproduction() {
    let a = chi_square_2x2(&ContingencyTable::new([[14, 2], [6, 10]]), true).unwrap();
    near(a.statistic, 6.533, 0.001, "chi2 first table");
    near(a.p_value, 0.011, 0.001, "p first table");
    let b = chi_square_2x2(&ContingencyTable::new([[3, 13], [10, 6]]), true).unwrap();
    near(b.statistic, 4.664, 0.001, "chi2 second table");
    near(b.p_value, 0.031, 0.001, "p second table");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let cells = [[rng.random_range(1..60), rng.random_range(1..60)], [rng.random_range(1..60), rng.random_range(1..60)]];
        let t = ContingencyTable::new(cells);
        let corrected = chi_square_2x2(&t, true).unwrap().statistic;
        let plain = chi_square_2x2(&t, false).unwrap().statistic;
        assert!(corrected <= plain + 1e-12, "{cells:?}: {corrected} > {plain}");
    }
}

fn p_value_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rejections = 0;
    for _ in 0..1000 {
        let a: Vec<f64> = (0..20).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..25).map(|_| 2.0 * normal.sample(&mut rng)).collect();
        let r = welch_t(&GroupSummary::from_sample(&a).unwrap(), &GroupSummary::from_sample(&b).unwrap()).unwrap();
        rejections += usize::from(r.p_value < 0.05);
    }
    let rate = rejections as f64 / 1000.0;
    assert!((0.03..=0.07).contains(&rate), "null rejection rate {rate}");

    // (df, x, P(T <= x)) and (df, x, P(X >= x)), computed with SciPy.
    let t_ref = [
        (1.0, 0.5, 0.6475836176504333),
        (2.0, -1.3, 0.1616235159080202),
        (5.0, 2.015, 0.9499969138365969),
        (10.0, -0.7, 0.24994378508644222),
        (28.0, 3.55, 0.9993080467202186),
        (30.0, 1.0, 0.8373456922869851),
        (65.0, -1.58, 0.05948064813081346),
        (120.0, 2.5, 0.9931152325374848),
        (3.7, 1.2, 0.8493538109240604),
        (57.2, -4.1, 6.603972626042388e-05),
    ];
    for (df, x, p) in t_ref {
        near(t_cdf(x, df).unwrap(), p, 1e-6, &format!("t cdf df={df} x={x}"));
    }
    let chi_ref = [
        (1.0, 6.533, 0.010589121453562772),
        (1.0, 4.664, 0.03080135524477564),
        (1.0, 0.1, 0.7518296340458492),
        (2.0, 3.0, 0.22313016014842982),
        (3.0, 7.8, 0.050331097859853326),
        (4.0, 0.5, 0.9735009788392561),
        (5.0, 11.07, 0.050009618622405425),
        (10.0, 18.3, 0.050109061411462506),
        (1.0, 15.0, 0.00010751117672950066),
        (7.0, 2.2, 0.9479465123362596),
    ];
    for (df, x, p) in chi_ref {
        near(chi_squared_sf(x, df).unwrap(), p, 1e-6, &format!("chi2 sf df={df} x={x}"));
    }
}

// ---- creativity ----------------------------------------------------------

type Cohort = Vec<(Condition, Vec<Vec<f64>>)>;

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dist(u: &[f64], v: &[f64]) -> f64 {
    let (u, v) = (unit(u), unit(v));
    1.0 - u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
}

fn centroid(ideas: &[Vec<f64>]) -> Vec<f64> {
    let us: Vec<Vec<f64>> = ideas.iter().map(|e| unit(e)).collect();
    (0..us[0].len()).map(|d| us.iter().map(|u| u[d]).sum::<f64>() / us.len() as f64).collect()
}

fn random_cohort(rng: &mut ChaCha8Rng) -> Cohort {
    let n = rng.random_range(4..=10);
    let dim = rng.random_range(2..=8);
    (0..n)
        .map(|i| {
            let c = if i < 2 || (i >= 4 && rng.random_bool(0.5)) { Condition::Treatment } else { Condition::Control };
            let k = rng.random_range(1..=6);
            (c, (0..k).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
        })
        .collect()
}

fn portfolios(c: &Cohort) -> Vec<ParticipantPortfolio> {
    c.iter().enumerate().map(|(i, (cond, e))| build_portfolio(e, &format!("p{i}"), *cond).unwrap()).collect()
}

/// Every score the library emits for the cohort, in a fixed order.
fn library_scores(c: &Cohort) -> Vec<f64> {
    let ps = portfolios(c);
    let mut out = Vec::new();
    for p in &ps {
        let o = originality(&ps, &p.participant_id).unwrap();
        out.extend([o.same_condition, o.all_participants, o.cross_condition_nn]);
        out.push(internal_diversity(p).map_or(-1.0, |d| d.mean_pairwise));
    }
    out
}

/// Same order as [`library_scores`], by enumerating every pair.
fn brute_force_scores(c: &Cohort) -> Vec<f64> {
    let cents: Vec<Vec<f64>> = c.iter().map(|(_, e)| centroid(e)).collect();
    let mut out = Vec::new();
    for i in 0..c.len() {
        let (mut same, mut all, mut cross) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..c.len() {
            if i == j {
                continue;
            }
            let d = dist(&cents[i], &cents[j]);
            all.push(d);
            if c[i].0 == c[j].0 { same.push(d) } else { cross.push(d) }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        out.extend([mean(&same), mean(&all), cross.iter().copied().fold(f64::INFINITY, f64::min)]);
        let ideas = &c[i].1;
        let pairs: Vec<f64> =
            (0..ideas.len()).flat_map(|a| (a + 1..ideas.len()).map(move |b| (a, b))).map(|(a, b)| dist(&ideas[a], &ideas[b])).collect();
        out.push(if pairs.is_empty() { -1.0 } else { mean(&pairs) });
    }
    out
}

fn assert_all_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{what}: {x} vs {y}");
    }
}

fn originality_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..120 {
        let cohort = random_cohort(&mut rng);
        let lib = library_scores(&cohort);
        assert_all_close(&lib, &brute_force_scores(&cohort), 1e-12, "brute force");
        let scaled: Cohort = cohort
            .iter()
            .map(|(c, e)| (*c, e.iter().map(|v| v.iter().map(|x| x * 37.5).collect()).collect()))
            .collect();
        assert_all_close(&lib, &library_scores(&scaled), 1e-12, "scale invariance");
        let renormed: Cohort = cohort.iter().map(|(c, e)| (*c, e.iter().map(|v| unit(v)).collect())).collect();
        assert_all_close(&lib, &library_scores(&renormed), 1e-12, "renormalization invariance");
    }
}

fn metric_bounds() {
    let same = vec![vec![0.3, 0.9, 0.1], vec![1.0, 0.0, 0.5]];
    let cohort: Cohort = (0..6)
        .map(|i| (if i < 3 { Condition::Treatment } else { Condition::Control }, same.clone()))
        .collect();
    for (k, v) in library_scores(&cohort).iter().enumerate() {
        if k % 4 != 3 {
            assert!(v.abs() < 1e-12, "identical centroids gave {v}");
        }
    }

    let anti = build_portfolio(&[vec![1.0, 2.0], vec![-1.0, -2.0]], "a", Condition::Treatment).unwrap();
    let peer = build_portfolio(&[vec![1.0, 0.0]], "b", Condition::Treatment).unwrap();
    let other = build_portfolio(&[vec![0.0, 1.0]], "c", Condition::Control).unwrap();
    assert_eq!(originality(&[anti, peer, other], "a"), Err(MetricError::ZeroVector));

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        for v in library_scores(&random_cohort(&mut rng)) {
            assert!(v == -1.0 || (0.0..=2.0).contains(&v), "distance {v} out of range");
        }
    }
}

// ---- engagement ----------------------------------------------------------

fn random_session(rng: &mut ChaCha8Rng) -> Session {
    let n = rng.random_range(1..=50);
    let mut messages = Vec::new();
    for i in 0..n {
        let p = if rng.random_bool(0.5) { PersonaId::Divergent } else { PersonaId::Convergent };
        let q = rng.random_range(0..3);
        messages.push(Message {
            message_id: format!("m{i}"),
            speaker: Speaker::User,
            persona_target: p,
            text: format!("note{}", "?".repeat(q)),
            sent_at: i as i64,
            unanswered: false,
        });
    }
    Session {
        schema_version: SESSION_SCHEMA_VERSION,
        session_id: "x".into(),
        condition: Condition::Treatment,
        task_statement: DEFAULT_TASK.into(),
        started_at: 0,
        deadline_at: 1,
        button_order_seed: 0,
        status: SessionStatus::Submitted,
        messages,
        survey: None,
        manual_flag: None,
    }
}

fn engagement_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let s = random_session(&mut rng);
        let n = s.messages.len();
        let quarter: Vec<u8> = (1..=n).map(|i| (1..=4u8).find(|q| 4 * i <= *q as usize * n).unwrap()).collect();
        let sizes = segment_quarters(n).sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);

        for persona in [None, Some(PersonaId::Divergent), Some(PersonaId::Convergent)] {
            let picked: Vec<&Message> = s
                .messages
                .iter()
                .zip(&quarter)
                .filter(|(m, q)| **q >= 2 && persona.is_none_or(|p| p == m.persona_target))
                .map(|(m, _)| m)
                .collect();
            match question_stats(&s.messages, &[2, 3, 4], persona) {
                Ok(st) => {
                    let marks: usize = picked.iter().map(|m| m.text.matches('?').count()).sum();
                    let with = picked.iter().filter(|m| m.text.contains('?')).count();
                    assert_eq!(st.messages, picked.len());
                    assert_eq!(st.mean_qmarks_per_message, marks as f64 / picked.len() as f64);
                    assert_eq!(st.pct_turns_with_question, 100.0 * with as f64 / picked.len() as f64);
                }
                Err(_) => assert!(picked.is_empty()),
            }
        }

        let targets: Vec<PersonaId> = s.messages.iter().map(|m| m.persona_target).collect();
        let b = session_behavior(&s).unwrap();
        let switches = (1..n).filter(|&i| targets[i] != targets[i - 1]).count();
        assert_eq!(b.switch_count, switches);
        assert_eq!(b.ending_persona, targets[n - 1]);
        let mut runs = vec![(targets[0], 1usize)];
        for t in &targets[1..] {
            let last = runs.last_mut().unwrap();
            if last.0 == *t {
                last.1 += 1;
            } else {
                runs.push((*t, 1));
            }
        }
        assert_eq!(runs.len(), switches + 1);
        for p in PersonaId::ALL {
            let best = runs.iter().filter(|r| r.0 == p).map(|r| r.1).max().unwrap_or(0);
            assert_eq!(b.longest_run[&p], best);
        }
    }
}

// ---- routing ------------------------------------------------------------

fn exchanges(k: usize) -> Vec<Message> {
    (0..2 * k)
        .map(|i| Message {
            message_id: format!("m{i}"),
            speaker: if i % 2 == 0 { Speaker::User } else { Speaker::Assistant },
            persona_target: PersonaId::Divergent,
            text: format!("turn {i}"),
            sent_at: i as i64,
            unanswered: false,
        })
        .collect()
}

fn routing_and_payload() {
    let a = serde_json::to_string(&resolve_persona(Condition::Control, PersonaId::Divergent)).unwrap();
    let b = serde_json::to_string(&resolve_persona(Condition::Control, PersonaId::Convergent)).unwrap();
    assert_eq!(a.as_bytes(), b.as_bytes());
    assert_eq!(resolve_persona(Condition::Treatment, PersonaId::Divergent).temperature, 0.8);
    assert_eq!(resolve_persona(Condition::Treatment, PersonaId::Convergent).temperature, 0.3);

    let cfg = resolve_persona(Condition::Treatment, PersonaId::Divergent);
    let w = DEFAULT_WINDOW;
    for len in [0, 1, w, w + 5] {
        let msgs = exchanges(len);
        let make = || build_payload(&cfg, &summarize_state(&msgs, DEFAULT_TASK), &msgs, w);
        assert_eq!(make().to_json().as_bytes(), make().to_json().as_bytes());
        let p = make();
        assert_eq!(p.generation.temperature, 0.8);
        let kept = len.min(w);
        assert_eq!(p.recent_transcript.len(), 2 * kept);
        let tail: Vec<&str> = msgs[2 * (len - kept)..].iter().map(|m| m.text.as_str()).collect();
        assert_eq!(p.recent_transcript.iter().map(|e| e.text.as_str()).collect::<Vec<_>>(), tail);
    }
}

// ---- pipeline -----------------------------------------------------------

fn pipeline_determinism() {
    let corpus = synth_corpus(&SynthSpec::default());
    assert_eq!(corpus.len(), 105);
    assert_eq!(apply_exclusions(corpus, &ExclusionRule::default()).retained.len(), 101);

    let logs = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus");
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("report{run}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_coachlab"))
            .env("RUST_LOG", "warn")
            .args(["analyze", "--offline-stub", "--logs"])
            .arg(&logs)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        reports.push(std::fs::read(&out).unwrap());
    }
    assert!(reports[0] == reports[1], "reports differ between runs");
    let r: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(r["participants"]["input"], 105);
    assert_eq!(r["participants"]["retained"], 101);
}

// ---- survey ---------------------------------------------------------------

fn survey_scoring() {
    let s = score_bfi(&[3; BFI_ITEMS], &KeyingTable::bfi2_xs()).unwrap();
    for t in Trait::ALL {
        assert_eq!(s.get(t), 3.0);
    }
    for v in 1..=5 {
        assert_eq!(reverse_item(reverse_item(v)), v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(4..=64);
        let scores: Vec<(String, f64)> =
            (0..n).map(|i| (format!("p{i:02}"), f64::from(rng.random_range(3..=15u8)) / 3.0)).collect();
        let Ok(q) = trait_quartiles(&scores) else {
            assert!(scores.iter().all(|s| s.1 == scores[0].1));
            continue;
        };
        checked += 1;
        assert_eq!(q.len(), n);
        let mut ids: Vec<&str> = q.iter().map(|x| x.0.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), n);
        let mut sizes = [0usize; 4];
        for (_, k) in &q {
            sizes[*k as usize - 1] += 1;
        }
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let score: std::collections::HashMap<&str, f64> = scores.iter().map(|(i, s)| (i.as_str(), *s)).collect();
        for w in q.windows(2) {
            assert!(score[w[0].0.as_str()] <= score[w[1].0.as_str()]);
            assert!(w[0].1 <= w[1].1);
        }
    }
}

// ---- driver ---------------------------------------------------------------

#[test]
fn primary_criteria() {
    let criteria: [(&str, fn(), Duration); 9] = [
        ("statistics reproduction", statistics_reproduction, Duration::from_secs(1)),
        ("chi-square reproduction", chi_square_reproduction, Duration::from_secs(1)),
        ("originality oracle", originality_oracle, Duration::from_secs(10)),
        ("metric bounds and degeneracies", metric_bounds, Duration::MAX),
        ("engagement recount", engagement_recount, Duration::MAX),
        ("routing and payload", routing_and_payload, Duration::MAX),
        ("pipeline determinism", pipeline_determinism, Duration::MAX),
        ("survey scoring", survey_scoring, Duration::MAX),
        ("p-value calibration", p_value_calibration, Duration::MAX),
    ];
    let mut failed = Vec::new();
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let problem = match outcome {
            Ok(()) if elapsed <= budget => None,
            Ok(()) => Some(format!("over budget {budget:?}")),
            Err(e) => Some(
                e.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default(),
            ),
        };
        match &problem {
            None => println!("PASS {name} [{:.3}s]", elapsed.as_secs_f64()),
            Some(why) => {
                println!("FAIL {name} [{:.3}s]: {why}", elapsed.as_secs_f64());
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
