//! Finite-difference verification of every differentiable operation, the
//! training objectives, and a tiny end-to-end model.
//!
//! Each named check is repeated with fresh random inputs for every seed;
//! the report keeps the worst relative error per name.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::network::{part, Bound, Model, ModelConfig, Pass};
use crate::synthetic::ClipKind;
use crate::tensor::gradcheck::{check, GradCheck};
use crate::tensor::{lstm_step, BatchNormState, BnMode, Graph, LstmVars, Tensor, Var};
use crate::training::{
    discriminator_loss, generator_loss, student_terms, teacher_terms, LossWeights,
};

pub const GRAD_STEP: f64 = 1e-4;
pub const GRAD_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_SEEDS: usize = 20;

type Objective = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

struct Case {
    inputs: Vec<Tensor>,
    f: Objective,
}

fn gauss(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.sample(StandardNormal))
}

/// Magnitudes in `[0.2, 1.2]` with random sign, away from activation kinks.
fn away(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.random_range(0.2..1.2);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Reduces a tensor output to a scalar through a fixed random weighting so
/// every output element contributes a distinct gradient.
fn project(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var> {
    let w = g.constant(weights.clone());
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

/// A case for an elementwise or shape operation `op` applied to `inputs`.
fn projected(
    rng: &mut ChaCha8Rng,
    inputs: Vec<Tensor>,
    out_shape: &[usize],
    op: impl Fn(&mut Graph, &[Var]) -> Result<Var> + 'static,
) -> Case {
    let w = gauss(rng, out_shape);
    Case {
        inputs,
        f: Box::new(move |g, v| {
            let out = op(g, v)?;
            project(g, out, &w)
        }),
    }
}

fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Case)> {
    let s = [3, 4];
    let mut cases: Vec<(&'static str, Case)> = Vec::new();
    let (a, b) = (gauss(rng, &s), gauss(rng, &s));
    cases.push(("add", projected(rng, vec![a.clone(), b.clone()], &s, |g, v| g.add(v[0], v[1]))));
    cases.push(("sub", projected(rng, vec![a.clone(), b.clone()], &s, |g, v| g.sub(v[0], v[1]))));
    cases.push(("mul", projected(rng, vec![a.clone(), b], &s, |g, v| g.mul(v[0], v[1]))));
    let (k, c) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
    cases.push(("affine", projected(rng, vec![a.clone()], &s, move |g, v| Ok(g.affine(v[0], k, c)))));
    cases.push(("scale", projected(rng, vec![a.clone()], &s, move |g, v| Ok(g.scale(v[0], k)))));
    cases.push(("sum", projected(rng, vec![a.clone()], &[], |g, v| Ok(g.sum(v[0])))));
    cases.push(("mean", projected(rng, vec![a.clone()], &[], |g, v| Ok(g.mean(v[0])))));
    let pos = uniform(rng, &s, 0.3, 2.0);
    cases.push(("ln", projected(rng, vec![pos], &s, |g, v| g.ln(v[0]))));
    let kinked = away(rng, &s);
    cases.push(("relu", projected(rng, vec![kinked.clone()], &s, |g, v| Ok(g.relu(v[0])))));
    cases.push(("leaky_relu", projected(rng, vec![kinked], &s, |g, v| Ok(g.leaky_relu(v[0], 0.2)))));
    cases.push(("sigmoid", projected(rng, vec![a.clone()], &s, |g, v| Ok(g.sigmoid(v[0])))));
    cases.push(("tanh", projected(rng, vec![a.clone()], &s, |g, v| Ok(g.tanh(v[0])))));
    let m = gauss(rng, &[4, 2]);
    cases.push(("matmul", projected(rng, vec![a.clone(), m], &[3, 2], |g, v| g.matmul(v[0], v[1]))));
    let row = gauss(rng, &[4]);
    cases.push((
        "add_row_bias",
        projected(rng, vec![a.clone(), row.clone()], &s, |g, v| g.add_row_bias(v[0], v[1])),
    ));
    cases.push(("mul_row", projected(rng, vec![a.clone(), row], &s, |g, v| g.mul_row(v[0], v[1]))));
    cases.push(("reshape", projected(rng, vec![a], &[2, 6], |g, v| g.reshape(v[0], [2, 6]))));

    let vol = gauss(rng, &[2, 2, 2, 3, 3]);
    cases.push((
        "pad3d",
        projected(rng, vec![vol], &[2, 2, 4, 5, 5], |g, v| g.pad3d(v[0], [1, 1, 1])),
    ));
    let big = gauss(rng, &[2, 2, 4, 5, 5]);
    cases.push((
        "crop3d",
        projected(rng, vec![big], &[2, 2, 2, 3, 3], |g, v| g.crop3d(v[0], [1, 1, 1])),
    ));

    let x = gauss(rng, &[2, 2, 4, 5, 6]);
    let w = gauss(rng, &[3, 2, 2, 3, 2]);
    let bias = gauss(rng, &[3]);
    cases.push((
        "conv3d",
        projected(rng, vec![x, w.clone(), bias], &[2, 3, 3, 2, 3], |g, v| {
            g.conv3d(v[0], v[1], Some(v[2]), [1, 2, 2])
        }),
    ));
    let y = gauss(rng, &[2, 3, 2, 2, 3]);
    let tbias = gauss(rng, &[2]);
    cases.push((
        "conv3d_transposed",
        projected(rng, vec![y, w, tbias], &[2, 2, 3, 5, 6], |g, v| {
            g.conv3d_transposed(v[0], v[1], Some(v[2]), [1, 2, 2])
        }),
    ));

    let xb = gauss(rng, &[3, 2, 2, 2, 2]);
    let gamma = uniform(rng, &[2], 0.5, 1.5);
    let beta = gauss(rng, &[2]);
    cases.push((
        "batch_norm.train",
        projected(rng, vec![xb.clone(), gamma.clone(), beta.clone()], &[3, 2, 2, 2, 2], |g, v| {
            let mut st = BatchNormState::new(2, 0.1, 1e-5);
            g.batch_norm(v[0], v[1], v[2], &mut st, BnMode::Train)
        }),
    ));
    let mut eval_state = BatchNormState::new(2, 0.1, 1e-5);
    eval_state.running_mean = gauss(rng, &[2]).into_data();
    eval_state.running_var = uniform(rng, &[2], 0.5, 2.0).into_data();
    cases.push((
        "batch_norm.eval",
        projected(rng, vec![xb, gamma, beta], &[3, 2, 2, 2, 2], move |g, v| {
            g.batch_norm(v[0], v[1], v[2], &mut eval_state.clone(), BnMode::Eval)
        }),
    ));
    let (p, q) = (gauss(rng, &s), gauss(rng, &s));
    cases.push(("mse", projected(rng, vec![p, q], &[], |g, v| g.mse(v[0], v[1]))));

    // lstm_step: inputs are a, h, c, then 4 input, 4 recurrent, 3 peephole and 4 bias tensors
    let (n, kw, d) = (2, 3, 4);
    let mut inputs = vec![gauss(rng, &[n, kw]), gauss(rng, &[n, d]), gauss(rng, &[n, d])];
    inputs.extend((0..4).map(|_| gauss(rng, &[kw, d]).map(|v| 0.5 * v)));
    inputs.extend((0..4).map(|_| gauss(rng, &[d, d]).map(|v| 0.5 * v)));
    inputs.extend((0..3).map(|_| gauss(rng, &[d])));
    inputs.extend((0..4).map(|_| gauss(rng, &[d])));
    let wh = gauss(rng, &[n, d]);
    let wc = gauss(rng, &[n, d]);
    cases.push((
        "lstm_step",
        Case {
            inputs,
            f: Box::new(move |g, v| {
                let p = LstmVars {
                    input: [v[3], v[4], v[5], v[6]],
                    recurrent: [v[7], v[8], v[9], v[10]],
                    peephole: [v[11], v[12], v[13]],
                    bias: [v[14], v[15], v[16], v[17]],
                };
                let (h, c) = lstm_step(g, v[0], v[1], v[2], &p)?;
                let ph = project(g, h, &wh)?;
                let pc = project(g, c, &wc)?;
                g.add(ph, pc)
            }),
        },
    ));
    cases
}

fn loss_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Case)> {
    let w = LossWeights::default();
    let vol = [2, 1, 2, 3, 3];
    let f = uniform(rng, &vol, -1.0, 1.0);
    let y = uniform(rng, &vol, -1.0, 1.0);
    let cr = uniform(rng, &[2], 0.1, 0.9);
    let cf = uniform(rng, &[2], 0.1, 0.9);
    let teacher = vec![f, y, cr.clone(), cf.clone()];
    let z = gauss(rng, &[2, 2, 1, 2, 2]);
    let v = gauss(rng, &[2, 2, 1, 2, 2]);
    let yt = uniform(rng, &vol, -1.0, 1.0);
    let st = uniform(rng, &vol, -1.0, 1.0);
    let student = vec![z, v, yt, st];
    let case = |inputs: Vec<Tensor>, f: Objective| Case { inputs, f };
    vec![
        (
            "loss.l_adv_c",
            case(vec![cr, cf.clone()], Box::new(|g, v| discriminator_loss(g, v[0], v[1]))),
        ),
        ("loss.l_adv_g", case(vec![cf], Box::new(|g, v| generator_loss(g, v[0])))),
        (
            "loss.mse_y",
            case(teacher.clone(), Box::new(move |g, v| Ok(teacher_terms(g, v[0], v[1], v[2], v[3], &w)?.mse_y))),
        ),
        (
            "loss.l_teacher",
            case(teacher, Box::new(move |g, v| Ok(teacher_terms(g, v[0], v[1], v[2], v[3], &w)?.l_teacher))),
        ),
        (
            "loss.mse_v",
            case(student.clone(), Box::new(move |g, v| Ok(student_terms(g, v[0], v[1], v[2], v[3], &w)?.mse_v))),
        ),
        (
            "loss.mse_s",
            case(student.clone(), Box::new(move |g, v| Ok(student_terms(g, v[0], v[1], v[2], v[3], &w)?.mse_s))),
        ),
        (
            "loss.l_student",
            case(student, Box::new(move |g, v| Ok(student_terms(g, v[0], v[1], v[2], v[3], &w)?.l_student))),
        ),
    ]
}

/// Smallest configuration that still runs every stage.
pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        kind: ClipKind::Silhouette,
        frames: 4,
        height: 4,
        width: 4,
        packets: 3,
        subcarriers: 2,
        hidden: 3,
        widths: vec![2],
        ..ModelConfig::default()
    }
}

/// Checks the gradient of `objective` with respect to every parameter
/// under `prefixes`, evaluating the model with frozen batch statistics.
fn model_case(
    model: &Model,
    prefixes: &[&str],
    objective: impl Fn(&mut Model, &mut Graph, &Bound) -> Result<Var> + 'static,
) -> Case {
    let names = model.names_with(prefixes);
    let inputs = names.iter().map(|n| model.param(n).expect("listed name").clone()).collect();
    let model = model.clone();
    Case {
        inputs,
        f: Box::new(move |g, v| {
            let b = Bound::from_pairs(names.iter().cloned().zip(v.iter().copied()));
            objective(&mut model.clone(), g, &b)
        }),
    }
}

fn model_cases(rng: &mut ChaCha8Rng) -> Result<Vec<(&'static str, Case)>> {
    let cfg = tiny_model_config();
    let model = Model::init(cfg.clone(), 0.5, rng.random())?;
    let w = LossWeights::default();
    let mut clip_shape = vec![2];
    clip_shape.extend(cfg.clip_shape());
    let clips = uniform(rng, &clip_shape, -1.0, 1.0);
    let fake = uniform(rng, &clip_shape, -1.0, 1.0);
    let lat = cfg.latent_shape()?;
    let z = gauss(rng, &[2, lat[0], lat[1], lat[2], lat[3]]);
    let rows: Vec<Tensor> = (0..cfg.packets).map(|_| gauss(rng, &[2, cfg.subcarriers])).collect();

    let teacher_clips = clips.clone();
    let teacher = model_case(&model, &[part::ENCODER, part::DECODER, part::DISCRIMINATOR], move |m, g, b| {
        let f = g.constant(teacher_clips.clone());
        let latent = m.encode_video(g, b, f, Pass::TrainFrozenStats)?;
        let y = m.decode_video(g, b, latent, Pass::TrainFrozenStats)?;
        let c_real = m.discriminate(g, b, f, Pass::TrainFrozenStats)?;
        let c_fake = m.discriminate(g, b, y, Pass::TrainFrozenStats)?;
        Ok(teacher_terms(g, f, y, c_real, c_fake, &w)?.l_teacher)
    });
    let disc = model_case(&model, &[part::DISCRIMINATOR], move |m, g, b| {
        let real = g.constant(clips.clone());
        let f = g.constant(fake.clone());
        let c_real = m.discriminate(g, b, real, Pass::TrainFrozenStats)?;
        let c_fake = m.discriminate(g, b, f, Pass::TrainFrozenStats)?;
        discriminator_loss(g, c_real, c_fake)
    });
    let y_target = uniform(rng, &clip_shape, -1.0, 1.0);
    let student = model_case(&model, &[part::LSTM, part::LIFT, part::DECODER], move |m, g, b| {
        let h = m.encode_signal(g, b, &rows)?;
        let v = m.lift_to_visual(g, b, h)?;
        let s = m.decode_video(g, b, v, Pass::Eval)?;
        let zc = g.constant(z.clone());
        let yc = g.constant(y_target.clone());
        Ok(student_terms(g, zc, v, yc, s, &w)?.l_student)
    });
    Ok(vec![
        ("model.teacher", teacher),
        ("model.discriminator", disc),
        ("model.student", student),
    ])
}

/// Runs every check for `seeds` seeds. `corrupt` perturbs each analytic
/// gradient before comparison, which every check must then flag.
pub fn gradient_suite(seeds: usize, corrupt: bool) -> Result<Vec<GradCheck>> {
    let mut report: Vec<GradCheck> = Vec::new();
    for seed in 0..seeds.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let mut cases = primitive_cases(&mut rng);
        cases.extend(loss_cases(&mut rng));
        cases.extend(model_cases(&mut rng)?);
        for (name, case) in cases {
            let r = check(name, &case.inputs, &*case.f, GRAD_STEP, GRAD_TOLERANCE, corrupt)?;
            match report.iter_mut().find(|e| e.name == name) {
                Some(e) => {
                    e.rel_err = e.rel_err.max(r.rel_err);
                    e.passed &= r.passed;
                }
                None => report.push(r),
            }
        }
    }
    Ok(report)
}

/// One line per check plus a summary line.
pub fn format_report(checks: &[GradCheck], seeds: usize) -> String {
    let mut out = String::new();
    for c in checks {
        let verdict = if c.passed { "ok" } else { "FAIL" };
        let _ = writeln!(out, "{:<22} worst rel err {:.3e} over {seeds} seeds  {verdict}", c.name, c.rel_err);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(out, "{} checks, {failed} failed", checks.len());
    out
}
