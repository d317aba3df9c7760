use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rsim::analysis::{count_strategies_rollout, count_strategies_text};
use rsim::checkpoint::Checkpoint;
use rsim::env::{generate_questions, read_questions_jsonl, write_questions_jsonl, TaskSpec};
use rsim::marl::{
    group_advantages, kl_token, planner_reward, reasoner_reward, sample_groups, score_rollout, SampleSettings,
};
use rsim::model::{cosine_lr, Policy, PolicyParams, PolicyRole, PolicySpec};
use rsim::{PlannerSource, PolicyShape, Rollout, Step, TaskKind, Vocab};

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}

fn arb_rollout() -> impl Strategy<Value = Rollout> {
    let step = (1usize..9, prop::collection::vec(0usize..27, 0..6));
    (prop::collection::vec(step, 0..8), any::<bool>()).prop_map(|(steps, terminated)| Rollout {
        question_id: 0,
        steps: steps
            .into_iter()
            .map(|(plan, tokens)| Step {
                strategy: rsim::Strategy::from_id(plan).unwrap(),
                old_token_logprobs: vec![-1.0; tokens.len()],
                tokens,
                old_plan_logprob: -1.0,
            })
            .collect(),
        terminated_by_planner: terminated,
        truncated: !terminated,
        termination_logprob: terminated.then_some(-1.0),
        extracted_answer: None,
    })
}

/// Left fold over the prompt's token names with a non-negative mod-10 residue.
fn brute_force_chain(names: &[&str]) -> i64 {
    let mut acc: i64 = names[0].parse().unwrap();
    for pair in names[1..].chunks(2) {
        let x: i64 = pair[1].parse().unwrap();
        acc = match pair[0] {
            "+" => acc + x,
            "-" => acc - x,
            "*" => acc * x,
            op => panic!("unexpected operator {op}"),
        }
        .rem_euclid(10);
    }
    acc
}

proptest! {
    #[test]
    fn advantages_are_standardized(rewards in prop::collection::vec(-5.0f64..5.0, 2..32)) {
        let adv = group_advantages(&rewards).unwrap();
        let (_, spread) = mean_std(&rewards);
        if spread < 1e-12 {
            prop_assert!(adv.iter().all(|&a| a == 0.0));
        } else {
            let (m, s) = mean_std(&adv);
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn advantages_ignore_shift_and_positive_scale(
        rewards in prop::collection::vec(-5.0f64..5.0, 2..16),
        shift in -10.0f64..10.0,
        scale in 0.1f64..10.0,
    ) {
        prop_assume!(mean_std(&rewards).1 > 1e-3);
        let base = group_advantages(&rewards).unwrap();
        let moved: Vec<f64> = rewards.iter().map(|r| r * scale + shift).collect();
        for (a, b) in base.iter().zip(group_advantages(&moved).unwrap()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn kl_is_non_negative(cur in -30.0f64..0.0, reference in -30.0f64..0.0) {
        prop_assert!(kl_token(cur, reference) >= 0.0);
    }

    #[test]
    fn reward_components_stay_in_range(r in arb_rollout(), correct in any::<bool>(), formatted in any::<bool>()) {
        let vocab = Vocab::standard();
        let (acc, terminal, penalty) = planner_reward(&r, correct);
        prop_assert_eq!(acc, if correct { 1.0 } else { 0.0 });
        prop_assert_eq!(terminal, if r.terminated_by_planner { 1.0 } else { -1.0 });
        prop_assert!((-1.0..0.0).contains(&penalty));
        // The modal plan holds at least a ninth of all plans.
        prop_assert!(penalty <= -1.0 / 9.0 + 1e-12);
        let (_, fmt, follow) = reasoner_reward(&r, correct, formatted, &vocab);
        prop_assert_eq!(fmt, if formatted { 1.0 } else { 0.0 });
        prop_assert!((0.0..=1.0).contains(&follow));
    }

    #[test]
    fn breakdown_totals_sum_components(r in arb_rollout(), seed in 0u64..1000) {
        let vocab = Vocab::standard();
        let q = generate_questions(&TaskSpec::strategy_lock(3), seed, 1).unwrap().remove(0);
        let b = score_rollout(&q, &r, &vocab, 6);
        prop_assert!((b.planner_total - (b.r_acc + b.r_terminal + b.r_penalty)).abs() < 1e-12);
        prop_assert!((b.reasoner_total - (b.r_acc + b.r_format + b.r_follow)).abs() < 1e-12);
    }

    #[test]
    fn strategies_per_rollout_bounded_by_steps(r in arb_rollout()) {
        let n = count_strategies_rollout(&r);
        prop_assert!(n <= r.steps.len());
        let expected = r.steps.iter().filter(|s| s.strategy != rsim::Strategy::Continuation).count();
        prop_assert_eq!(n, expected);
    }

    #[test]
    fn chain_ground_truth_matches_brute_force(depth in 1usize..6, seed in any::<u64>()) {
        let vocab = Vocab::standard();
        for q in generate_questions(&TaskSpec::chain_arithmetic(depth), seed, 20).unwrap() {
            let names: Vec<&str> = q.prompt_tokens[1..].iter().map(|&t| vocab.token(t).unwrap()).collect();
            prop_assert_eq!(names.len(), 2 * depth + 1);
            let want = brute_force_chain(&names).to_string();
            prop_assert_eq!(vocab.token(q.ground_truth[0]).unwrap(), want.as_str());
        }
    }

    #[test]
    fn lock_prompts_spell_their_lock(depth in 1usize..6, seed in any::<u64>(), second_half in any::<bool>()) {
        let vocab = Vocab::standard();
        let task = TaskSpec::lock_partition(depth, second_half);
        let range = if second_half { 5..=8 } else { 1..=4 };
        for q in generate_questions(&task, seed, 20).unwrap() {
            prop_assert_eq!(q.task, TaskKind::StrategyLock);
            let lock = q.lock_sequence.clone().unwrap();
            prop_assert_eq!(lock.len(), depth);
            prop_assert_eq!(&q.prompt_tokens[..2], &[vocab.bos, vocab.lock][..]);
            for (k, &t) in lock.iter().zip(&q.prompt_tokens[2..]) {
                prop_assert!(range.contains(&k.id()));
                prop_assert_eq!(vocab.digit_value(t), Some(k.id() as u8));
            }
        }
    }

    #[test]
    fn appending_a_step_never_lowers_counts(a in "[a-z ,.-]{0,60}", b in "[a-z ,.-]{0,60}", pick in 0usize..40) {
        let words = ["verify", "break down", "reflect", "summarize", "prioritize", "plan", "think", "check"];
        let text = format!("{a} {} {b}", words[pick % words.len()]);
        let before = count_strategies_text(&text);
        prop_assert_eq!(before, count_strategies_text(&text));
        let after = count_strategies_text(&format!("{text}\n\n{b} {}", words[(pick / 8) % words.len()]));
        let steps = 2;
        for s in rsim::Strategy::ALL {
            prop_assert!(after.get(s) >= before.get(s));
            prop_assert!(after.get(s) <= steps);
        }
    }

    #[test]
    fn cosine_schedule_is_bounded_and_non_increasing(total in 1u64..500, lr_max in 1e-4f64..1.0, frac in 0.0f64..1.0) {
        let lr_min = lr_max * frac;
        let mut prev = f64::INFINITY;
        for step in 0..total {
            let lr = cosine_lr(step, total, lr_max, lr_min).unwrap();
            prop_assert!(lr <= lr_max + 1e-15 && lr >= lr_min - 1e-15);
            prop_assert!(lr <= prev + 1e-15);
            prev = lr;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), embed in 1usize..6, window in 1usize..8, hidden in 1usize..10) {
        let vocab = Vocab::standard();
        let shape = PolicyShape { embed_dim: embed, context_window: window, hidden_dims: vec![hidden] };
        for role in [PolicyRole::Planner, PolicyRole::Reasoner] {
            let spec = PolicySpec::for_role(role, &shape, vocab.len());
            let params = PolicyParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
            let bytes = Checkpoint::new(role, params.clone(), seed % 1000, 1, None).to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back.params, &params);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn questions_round_trip_through_jsonl(seed in any::<u64>(), chain in any::<bool>(), depth in 1usize..5) {
        let vocab = Vocab::standard();
        let task = if chain { TaskSpec::chain_arithmetic(depth) } else { TaskSpec::strategy_lock(depth) };
        let qs = generate_questions(&task, seed, 10).unwrap();
        let mut buf = Vec::new();
        write_questions_jsonl(&qs, &vocab, &mut buf).unwrap();
        prop_assert_eq!(read_questions_jsonl(buf.as_slice(), &vocab).unwrap(), qs);
    }

    #[test]
    fn sampling_does_not_depend_on_thread_count(seed in any::<u64>()) {
        let vocab = Vocab::standard();
        let shape = PolicyShape { embed_dim: 4, context_window: 6, hidden_dims: vec![8] };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planner = Policy::new(PolicyParams::init(&PolicySpec::planner(&shape, vocab.len()), &mut rng), vocab.pad);
        let reasoner = Policy::new(PolicyParams::init(&PolicySpec::reasoner(&shape, vocab.len()), &mut rng), vocab.pad);
        let questions = generate_questions(&TaskSpec::chain_arithmetic(2), seed, 3).unwrap();
        let s = SampleSettings {
            planner_temp: 1.0,
            reasoner_temp: 1.0,
            n_max: 4,
            l_max: 5,
            planner_source: PlannerSource::Learned,
            mask: None,
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| sample_groups(&questions, &planner, &reasoner, &vocab, &s, 40, seed).unwrap())
        };
        let one = run(1);
        prop_assert_eq!(one.len(), 3);
        prop_assert!(one.iter().all(|g| g.len() == 40));
        prop_assert_eq!(one, run(4));
    }
}

#[test]
fn masked_strategy_is_never_planned() {
    let vocab = Vocab::standard();
    let shape = PolicyShape { embed_dim: 4, context_window: 6, hidden_dims: vec![8] };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let planner = Policy::new(PolicyParams::init(&PolicySpec::planner(&shape, vocab.len()), &mut rng), vocab.pad);
    let reasoner = Policy::new(PolicyParams::init(&PolicySpec::reasoner(&shape, vocab.len()), &mut rng), vocab.pad);
    let questions = generate_questions(&TaskSpec::strategy_lock(3), 9, 4).unwrap();
    for mask in [rsim::Strategy::Validation, rsim::Strategy::Termination] {
        let s = SampleSettings {
            planner_temp: 1.0,
            reasoner_temp: 1.0,
            n_max: 6,
            l_max: 4,
            planner_source: PlannerSource::Learned,
            mask: Some(mask),
        };
        for group in sample_groups(&questions, &planner, &reasoner, &vocab, &s, 64, 9).unwrap() {
            for r in group {
                assert!(r.plans().iter().all(|&p| p != mask), "{mask} planned");
            }
        }
    }
}
