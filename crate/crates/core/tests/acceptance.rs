//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p rsim-core --test acceptance -- 1 2 11`.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rsim::analysis::{count_strategies_text, counts_csv};
use rsim::checkpoint::Checkpoint;
use rsim::env::TaskSpec;
use rsim::marl::{
    continue_train, eval_questions, init_policies, evaluate, group_advantages, kl_token, planner_reward, plugin_eval, reasoner_reward,
    train, EvalReport, EvalSettings, MetricsLog, UpdateMetrics,
};
use rsim::model::{gradcheck, Policy, PolicyParams, PolicyRole, PolicySpec};
use rsim::{PlannerSource, RunConfig, Rollout, Step, Strategy, Vocab};

type Check = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    run: fn(&mut Shared) -> Check,
}

/// Trained StrategyLock pair, produced by criterion 7 and reused by 9.
#[derive(Default)]
struct Shared {
    lock_pair: Option<(PolicyParams, PolicyParams, EvalReport)>,
}

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria = [
        Criterion { id: 1, name: "reward formulas", run: c1_rewards },
        Criterion { id: 2, name: "advantage properties", run: c2_advantages },
        Criterion { id: 3, name: "gradient check", run: c3_gradcheck },
        Criterion { id: 4, name: "KL estimator", run: c4_kl },
        Criterion { id: 5, name: "lambda extremes", run: c5_lambda_extremes },
        Criterion { id: 6, name: "determinism", run: c6_determinism },
        Criterion { id: 7, name: "planner learning", run: c7_planner_learning },
        Criterion { id: 8, name: "joint learning", run: c8_joint_learning },
        Criterion { id: 9, name: "plugin workflow", run: c9_plugin },
        Criterion { id: 10, name: "continual learning", run: c10_continual },
        Criterion { id: 11, name: "strategy counter", run: c11_counter },
        Criterion { id: 12, name: "checkpoint round trip", run: c12_checkpoint },
    ];
    let mut shared = Shared::default();
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let result = (c.run)(&mut shared);
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS {} ({secs:.1}s): {detail}", c.id, c.name),
            Err(detail) => {
                println!("criterion {:>2} FAIL {} ({secs:.1}s): {detail}", c.id, c.name);
                failed.push(c.id);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rollout(plans: &[Strategy], first_tokens: &[&str], terminated: bool, vocab: &Vocab) -> Rollout {
    let steps = plans
        .iter()
        .zip(first_tokens)
        .map(|(&strategy, tok)| Step {
            strategy,
            tokens: vec![vocab.id(tok).unwrap(), vocab.sep],
            old_token_logprobs: vec![-1.0, -1.0],
            old_plan_logprob: -1.0,
        })
        .collect();
    Rollout {
        question_id: 0,
        steps,
        terminated_by_planner: terminated,
        truncated: !terminated,
        termination_logprob: terminated.then_some(-1.0),
        extracted_answer: None,
    }
}

fn c1_rewards(_: &mut Shared) -> Check {
    use Strategy::*;
    let v = Vocab::standard();
    let total = |(a, t, p): (f64, f64, f64)| a + t + p;
    let cases = [
        (total(planner_reward(&rollout(&[Decomposition, Validation], &["M2", "M4"], true, &v), true)), 1.0 + 1.0 - 1.0 / 3.0),
        (total(planner_reward(&rollout(&[SelfReflection; 5], &["M1"; 5], false, &v), false)), -2.0),
        (total(planner_reward(&rollout(&[], &[], true, &v), false)), 0.0),
    ];
    let follow3 = rollout(&[Decomposition, SubPlanning, Summarization], &["M2", "M7", "M3"], true, &v);
    let (acc, fmt, follow) = reasoner_reward(&follow3, true, true, &v);
    let all_follow = reasoner_reward(&rollout(&[Decomposition, SubPlanning, Summarization], &["M2", "M7", "M5"], true, &v), true, true, &v).2;
    let mut worst: f64 = 0.0;
    for (got, want) in cases.iter().copied().chain([(acc + fmt + follow, 1.0 + 1.0 + 2.0 / 3.0), (all_follow, 1.0)]) {
        worst = worst.max((got - want).abs());
    }
    ensure(worst <= 1e-9, format!("max deviation {worst:.1e} over 5 worked examples"))
}

fn c2_advantages(_: &mut Shared) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_mean, mut worst_std, mut degenerate) = (0.0f64, 0.0f64, 0usize);
    for i in 0..10_000 {
        let g = [2, 4, 16][i % 3];
        let rewards: Vec<f64> = if i % 10 == 0 {
            vec![rng.gen_range(-3.0..3.0); g]
        } else {
            (0..g).map(|_| rng.gen_range(-3.0..3.0)).collect()
        };
        let adv = group_advantages(&rewards).map_err(fail)?;
        let all_equal = rewards.iter().all(|&r| r == rewards[0]);
        if all_equal {
            if adv.iter().any(|&a| a != 0.0) {
                return Err(format!("degenerate group {rewards:?} gave {adv:?}"));
            }
            degenerate += 1;
            continue;
        }
        let n = g as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((std - 1.0).abs());
    }
    let fixed = group_advantages(&[0.0, 1.0, 2.0, 3.0]).map_err(fail)?;
    let want = [-1.3416, -0.4472, 0.4472, 1.3416];
    let fixed_err = fixed.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(
        worst_mean <= 1e-9 && worst_std <= 1e-6 && fixed_err <= 1e-4,
        format!("|mean| {worst_mean:.1e}, |std-1| {worst_std:.1e}, {degenerate} degenerate groups zeroed, [0,1,2,3] error {fixed_err:.1e}"),
    )
}

fn c3_gradcheck(_: &mut Shared) -> Check {
    let v = Vocab::standard();
    let cfg = RunConfig::default();
    let mut probes = 0;
    let mut worst: f64 = 0.0;
    for (i, spec) in [PolicySpec::planner(&cfg.planner, v.len()), PolicySpec::reasoner(&cfg.reasoner, v.len())].iter().enumerate() {
        let report = gradcheck(spec, 30 + i as u64, 1000);
        probes += report.probes;
        worst = worst.max(report.max_rel_error);
    }
    ensure(probes >= 1000 && worst < 1e-6, format!("{probes} probes over both policies, max relative error {worst:.2e}"))
}

fn c4_kl(_: &mut Shared) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut min: f64 = f64::INFINITY;
    for _ in 0..10_000 {
        let cur: f64 = rng.gen_range(-20.0..0.0);
        let log_r: f64 = rng.gen_range(-10.0..10.0);
        min = min.min(kl_token(cur, cur + log_r));
    }
    let at_one = kl_token(-1.3, -1.3);
    let at_two = kl_token(-2.0, -2.0 + 2f64.ln());
    ensure(
        min >= 0.0 && at_one == 0.0 && (at_two - 0.3069).abs() <= 1e-4,
        format!("min over 10000 ratios {min:.2e}, r=1 -> {at_one}, r=2 -> {at_two:.5}"),
    )
}

fn bits(p: &PolicyParams) -> Vec<u64> {
    p.tensors.iter().flat_map(|t| t.data.iter().map(|x| x.to_bits())).collect()
}

fn small_config(seed: u64, lambda: f64) -> RunConfig {
    RunConfig {
        task: TaskSpec::strategy_lock(2),
        lambda_stage1: lambda,
        lambda_stage2: lambda,
        epochs: 2,
        steps_per_epoch: 5,
        batch_questions: 4,
        grad_accum: 2,
        n_max: 4,
        l_max: 6,
        seed,
        ..RunConfig::default()
    }
}

fn c5_lambda_extremes(_: &mut Shared) -> Check {
    let mut details = Vec::new();
    for (lambda, frozen) in [(1.0, PolicyRole::Reasoner), (0.0, PolicyRole::Planner)] {
        let cfg = small_config(5, lambda);
        let (p, r) = init_policies(&cfg);
        let out = train(&cfg, p.clone(), r.clone(), &mut ()).map_err(fail)?;
        let (before, after, moved) = match frozen {
            PolicyRole::Reasoner => (bits(&r), bits(&out.reasoner), bits(&p) != bits(&out.planner)),
            PolicyRole::Planner => (bits(&p), bits(&out.planner), bits(&r) != bits(&out.reasoner)),
        };
        if before != after {
            return Err(format!("lambda = {lambda}: {frozen} parameters changed"));
        }
        if !moved {
            return Err(format!("lambda = {lambda}: the trained agent did not move"));
        }
        details.push(format!("lambda={lambda} leaves the {frozen} bit-identical over {} updates", out.updates));
    }
    Ok(details.join("; "))
}

fn metrics_lines(cfg: &RunConfig) -> Result<Vec<String>, String> {
    let (p, r) = init_policies(cfg);
    let mut log = MetricsLog::default();
    train(cfg, p, r, &mut log).map_err(fail)?;
    Ok(log.0.iter().take(10).map(UpdateMetrics::to_json_line).collect())
}

fn c6_determinism(_: &mut Shared) -> Check {
    let base = RunConfig { eval_every: 5, eval_questions: 8, ..small_config(6, 0.7) };
    let mut runs = Vec::new();
    for threads in [1, 8] {
        let cfg = RunConfig { threads, ..base.clone() };
        let a = metrics_lines(&cfg)?;
        let b = metrics_lines(&cfg)?;
        if a != b {
            return Err(format!("two runs at {threads} threads differ"));
        }
        runs.push(a);
    }
    ensure(
        runs[0].len() == 10 && runs[0] == runs[1],
        format!("{} metrics lines identical across repeats and across 1 and 8 threads", runs[0].len()),
    )
}

/// Evaluation of `planner` alongside a uniform-random planner on the same questions.
fn lock_eval(cfg: &RunConfig, planner: &PolicyParams, reasoner: &PolicyParams) -> Result<(EvalReport, EvalReport), String> {
    let v = Vocab::standard();
    let qs = eval_questions(&cfg.task, cfg.seed, 50).map_err(fail)?;
    let s = EvalSettings::from_config(cfg);
    let (p, r) = (Policy::new(planner.clone(), v.pad), Policy::new(reasoner.clone(), v.pad));
    let learned = evaluate(&p, &r, &v, &qs, &s).map_err(fail)?;
    let random = evaluate(&p, &r, &v, &qs, &EvalSettings { planner_source: PlannerSource::UniformRandom, ..s }).map_err(fail)?;
    Ok((learned, random))
}

fn lock_config() -> RunConfig {
    RunConfig::from_json(include_str!("configs/lock.json")).expect("lock config")
}

fn c7_planner_learning(shared: &mut Shared) -> Check {
    let cfg = lock_config();
    let (p, r) = init_policies(&cfg);
    let start = Instant::now();
    let out = train(&cfg, p, r, &mut ()).map_err(fail)?;
    let secs = start.elapsed().as_secs_f64();
    let (learned, random) = lock_eval(&cfg, &out.planner, &out.reasoner)?;
    let plan_acc = learned.plan_accuracy.unwrap_or(0.0);
    let random_acc = random.plan_accuracy.unwrap_or(1.0);
    let detail = format!(
        "exact-sequence accuracy {plan_acc:.2} after {} updates in {secs:.0}s (need >= 0.95 within 2000 updates and 300s); random planner {random_acc:.2} (need < 0.05)",
        out.updates
    );
    shared.lock_pair = Some((out.planner, out.reasoner, learned));
    ensure(plan_acc >= 0.95 && out.updates <= 2000 && secs < 300.0 && random_acc < 0.05, detail)
}

fn c8_joint_learning(_: &mut Shared) -> Check {
    let cfg = RunConfig::from_json(include_str!("configs/chain.json")).map_err(fail)?;
    let baseline_cfg = RunConfig {
        planner_source: PlannerSource::UniformRandom,
        lambda_stage1: 0.0,
        lambda_stage2: 0.0,
        ..cfg.clone()
    };
    let v = Vocab::standard();
    let qs = eval_questions(&cfg.task, cfg.seed, cfg.eval_questions).map_err(fail)?;
    let mut acc = Vec::new();
    for c in [&cfg, &baseline_cfg] {
        let (p, r) = init_policies(c);
        let out = train(c, p, r, &mut ()).map_err(fail)?;
        let (p, r) = (Policy::new(out.planner, v.pad), Policy::new(out.reasoner, v.pad));
        acc.push(evaluate(&p, &r, &v, &qs, &EvalSettings::from_config(c)).map_err(fail)?.accuracy);
    }
    let (joint, alone) = (acc[0], acc[1]);
    ensure(
        joint >= 0.90 && joint - alone >= 0.30,
        format!("two-stage accuracy {joint:.2} (need >= 0.90), reasoner-only {alone:.2}, gap {:.2} (need >= 0.30)", joint - alone),
    )
}

fn c9_plugin(shared: &mut Shared) -> Check {
    if shared.lock_pair.is_none() {
        c7_planner_learning(shared).ok();
    }
    let (planner, _, joint) = shared.lock_pair.as_ref().ok_or("no trained StrategyLock pair")?;
    let base = lock_config();
    let cfg = RunConfig {
        lambda_stage1: 0.0,
        lambda_stage2: 0.0,
        steps_per_epoch: base.steps_per_epoch / 2,
        seed: base.seed + 9,
        ..base.clone()
    };
    let before = Checkpoint::new(PolicyRole::Planner, planner.clone(), 0, 1, None).to_bytes();
    let (_, fresh) = init_policies(&cfg);
    let out = train(&cfg, planner.clone(), fresh, &mut ()).map_err(fail)?;
    let report = plugin_eval(&out.planner, Some(&out.reasoner), &base.task, &RunConfig { eval_questions: 50, ..base.clone() }, None)
        .map_err(fail)?;
    let after = Checkpoint::new(PolicyRole::Planner, out.planner, 0, 1, None).to_bytes();
    let unchanged = before == after;
    let ratio_ok = joint.accuracy > 0.0 && report.accuracy >= 0.9 * joint.accuracy;
    ensure(
        unchanged && ratio_ok,
        format!(
            "plugin accuracy {:.2} vs joint {:.2} (need >= 90% of a non-zero joint accuracy); planner bytes unchanged: {unchanged}",
            report.accuracy, joint.accuracy
        ),
    )
}

fn c10_continual(_: &mut Shared) -> Check {
    let base = lock_config();
    let task_a = TaskSpec::lock_partition(base.task.depth, false);
    let task_b = TaskSpec::lock_partition(base.task.depth, true);
    let cfg_a = RunConfig { task: task_a.clone(), ..base.clone() };
    let (p, r) = init_policies(&cfg_a);
    let first = train(&cfg_a, p, r, &mut ()).map_err(fail)?;
    let cfg_b = RunConfig { task: task_b, eval_questions: 50, ..base };
    let (_, report) = continue_train(first.planner, first.reasoner, &task_a, &cfg_b, &mut ()).map_err(fail)?;
    let retention = if report.original_before > 0.0 { report.original_after / report.original_before } else { 0.0 };
    ensure(
        report.new_after >= 0.90 && report.original_before > 0.0 && retention >= 0.80,
        format!(
            "B accuracy {:.2} (need >= 0.90); A accuracy {:.2} -> {:.2}, retention {:.2} (need >= 0.80)",
            report.new_after, report.original_before, report.original_after, retention
        ),
    )
}

fn c11_counter(_: &mut Shared) -> Check {
    use Strategy::*;
    let fixtures: [(&str, &[Strategy]); 3] = [
        ("First, break down the problem.\n\nThen verify each part.", &[Decomposition, Validation]),
        ("We reflect on this.", &[SelfReflection, DeliberativeThinking]),
        ("", &[]),
    ];
    for (text, expected) in fixtures {
        let c = count_strategies_text(text);
        for s in Strategy::ALL {
            let want = u32::from(expected.contains(&s));
            if c.get(s) != want {
                return Err(format!("{text:?}: {s} counted {} (want {want})", c.get(s)));
            }
        }
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/corpus");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .map_err(fail)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("text_")))
        .collect();
    files.sort();
    let counts: Vec<_> = files.iter().map(|f| std::fs::read_to_string(f).map(|t| count_strategies_text(&t))).collect::<Result<_, _>>().map_err(fail)?;
    let expected = std::fs::read_to_string(dir.join("expected_counts.csv")).map_err(fail)?;
    let got = counts_csv(&counts);
    ensure(
        files.len() == 20 && got == expected,
        format!("3 fixtures exact; {} corpus texts, CSV byte-identical: {}", files.len(), got == expected),
    )
}

fn c12_checkpoint(_: &mut Shared) -> Check {
    let cfg = small_config(12, 0.7);
    let (p, r) = init_policies(&cfg);
    let out = train(&cfg, p, r, &mut ()).map_err(fail)?;
    let dir = tempfile::tempdir().map_err(fail)?;
    let mut sizes = Vec::new();
    for (role, params) in [(PolicyRole::Planner, out.planner), (PolicyRole::Reasoner, out.reasoner)] {
        let first = dir.path().join(format!("{role}_a.ckpt"));
        let second = dir.path().join(format!("{role}_b.ckpt"));
        Checkpoint::new(role, params, out.updates, out.last_stage, Some(cfg.clone())).save(&first).map_err(fail)?;
        Checkpoint::load(&first).map_err(fail)?.save(&second).map_err(fail)?;
        let (a, b) = (std::fs::read(&first).map_err(fail)?, std::fs::read(&second).map_err(fail)?);
        if a != b {
            return Err(format!("{role} checkpoint changed on re-save"));
        }
        sizes.push(format!("{role} {} bytes", a.len()));
    }
    Ok(format!("save -> load -> save byte-identical ({})", sizes.join(", ")))
}
