//! Central-difference check of the analytic log-probability gradients.
//!
//! The analytic side runs through [`Policy::backward_accumulate`] (cached
//! first-layer route); the numeric side differences the dense
//! [`forward_logits`] route, so the two share no code beyond the layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::{forward_logits, log_softmax, GradBuffer, Policy};
use super::{PolicyParams, PolicySpec};
use crate::domain::TokenId;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor: below this magnitude the error is effectively absolute.
pub const REL_FLOOR: f64 = 1e-4;
/// Parameter scale for the checked networks; larger than the training init so
/// that hidden units are off the linear regime.
pub const CHECK_INIT_SCALE: f64 = 0.3;
const PROBES_PER_CONTEXT: usize = 25;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Probe {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
    pub worst: Option<Probe>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn gradcheck(spec: &PolicySpec, seed: u64, n_probes: usize) -> GradcheckReport {
    gradcheck_with(spec, seed, n_probes, |g| g)
}

/// Runs the check with `corrupt` applied to each analytic gradient before comparison.
pub fn gradcheck_with(spec: &PolicySpec, seed: u64, n_probes: usize, corrupt: impl Fn(f64) -> f64) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = PolicyParams::init_uniform(spec, CHECK_INIT_SCALE, &mut rng);
    check_params(&params, &mut rng, n_probes, corrupt)
}

pub fn check_params<R: Rng>(
    params: &PolicyParams,
    rng: &mut R,
    n_probes: usize,
    corrupt: impl Fn(f64) -> f64,
) -> GradcheckReport {
    let spec = &params.spec;
    let pad = 0;
    let policy = Policy::new(params.clone(), pad);
    let mut report = GradcheckReport { probes: 0, max_rel_error: 0.0, worst: None };
    while report.probes < n_probes {
        let len = rng.gen_range(1..=spec.context_window + 4);
        let context: Vec<TokenId> = (0..len).map(|_| rng.gen_range(0..spec.vocab_size)).collect();
        let target = rng.gen_range(0..spec.output_arity);
        let temperature = if rng.gen_bool(0.5) { 1.0 } else { 0.9 };
        let mut buf = GradBuffer::new(params);
        policy
            .backward_accumulate(&context, target, temperature, 1.0, &mut buf)
            .expect("valid probe context");
        let grads = buf.finish(params).expect("matching buffer");

        let objective = |p: &PolicyParams| {
            let z = forward_logits(p, &context, pad).expect("valid probe context");
            log_softmax(&z, temperature)[target]
        };
        let mut probe_params = params.clone();
        for _ in 0..PROBES_PER_CONTEXT.min(n_probes - report.probes) {
            let ti = rng.gen_range(0..params.tensors.len());
            let idx = rng.gen_range(0..params.tensors[ti].data.len());
            let orig = probe_params.tensors[ti].data[idx];
            probe_params.tensors[ti].data[idx] = orig + FD_STEP;
            let up = objective(&probe_params);
            probe_params.tensors[ti].data[idx] = orig - FD_STEP;
            let down = objective(&probe_params);
            probe_params.tensors[ti].data[idx] = orig;

            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = corrupt(grads.get(ti, idx));
            let rel_error = relative_error(analytic, numeric);
            report.probes += 1;
            if report.worst.is_none() || rel_error > report.max_rel_error {
                report.max_rel_error = rel_error;
                report.worst = Some(Probe {
                    tensor: params.tensors[ti].name.clone(),
                    index: idx,
                    analytic,
                    numeric,
                    rel_error,
                });
            }
        }
    }
    report
}
