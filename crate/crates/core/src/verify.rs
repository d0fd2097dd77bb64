//! Finite-difference verification of every tape op and of the full
//! training losses, used by the `gradcheck` subcommand and the tests.
//!
//! Loss checks pack all trainable parameters and the online latent into a
//! single flat input, so one central-difference sweep covers the encoder
//! path and every network the loss is meant to update. Frozen copies,
//! momentum targets and bootstrap targets stay constants on the tape.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::agents::{QConfig, QHead, SacConfig, SacHead};
use crate::envs::{Action, ActionSpace};
use crate::nets::{BoundHeads, BoundMlp, DynamicsModel, Metric, Module, ProjectionHeads};
use crate::rng::{self, StreamRng};
use crate::tensor::{grad_check, Result, Tape, Tensor, Var};
use crate::virtual_loop::{
    backward_prediction_loss, cycle_loss, encode_segment_actions, encode_virtual_actions, prediction_loss,
    sample_action_sets,
};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckSummary {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    /// Coordinates skipped as non-differentiable points, over all instances.
    pub excluded: usize,
    pub checked: usize,
    pub passed: bool,
}

type Loss = Box<dyn Fn(&mut Tape<f64>, Var) -> Result<Var>>;
type Case = fn(&mut StreamRng) -> (Tensor<f64>, Loss);

fn randn(rng: &mut StreamRng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).expect("valid shape")
}

fn uniform(rng: &mut StreamRng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("valid shape")
}

/// Reduces any output to a scalar with random weights so that every
/// output coordinate contributes a distinct gradient.
fn contract(tape: &mut Tape<f64>, out: Var, weights: &Tensor<f64>) -> Result<Var> {
    let w = tape.constant(weights.clone().reshaped(tape.value(out).shape())?);
    let p = tape.mul(out, w)?;
    Ok(tape.sum(p))
}

fn ok(v: Var) -> Result<Var> {
    Ok(v)
}

/// Builds a [`Case`] for an op of the input alone.
macro_rules! unary_case {
    ($shape:expr, $lo:expr, $hi:expr, |$tape:ident, $x:ident| $body:expr) => {{
        fn case(rng: &mut StreamRng) -> (Tensor<f64>, Loss) {
            let shape: &[usize] = &$shape;
            let x = uniform(rng, shape, $lo, $hi);
            let out_weights = randn(rng, &[64]);
            let f: Loss = Box::new(move |$tape: &mut Tape<f64>, $x: Var| {
                let out = $body?;
                let n = $tape.value(out).numel();
                let w = Tensor::vector(out_weights.data()[..n].to_vec());
                contract($tape, out, &w)
            });
            (x, f)
        }
        case as Case
    }};
}

/// Builds a [`Case`] for a binary op where the input is one operand and a
/// random constant the other.
macro_rules! binary_case {
    ($xs:expr, $cs:expr, |$tape:ident, $x:ident, $c:ident| $body:expr) => {{
        fn case(rng: &mut StreamRng) -> (Tensor<f64>, Loss) {
            let x = randn(rng, &$xs);
            let c = randn(rng, &$cs);
            let out_weights = randn(rng, &[64]);
            let f: Loss = Box::new(move |$tape: &mut Tape<f64>, $x: Var| {
                let $c = $tape.constant(c.clone());
                let out = $body?;
                let n = $tape.value(out).numel();
                let w = Tensor::vector(out_weights.data()[..n].to_vec());
                contract($tape, out, &w)
            });
            (x, f)
        }
        case as Case
    }};
}

fn op_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("matmul.lhs", binary_case!([3, 4], [4, 2], |t, x, c| t.matmul(x, c))),
        ("matmul.rhs", binary_case!([4, 2], [3, 4], |t, x, c| t.matmul(c, x))),
        ("add", binary_case!([3, 4], [3, 4], |t, x, c| t.add(x, c))),
        ("add.scalar_broadcast", binary_case!([1], [3, 4], |t, x, c| t.add(c, x))),
        ("sub", binary_case!([3, 4], [3, 4], |t, x, c| t.sub(c, x))),
        ("mul", binary_case!([3, 4], [3, 4], |t, x, c| t.mul(x, c))),
        ("mul.scalar_broadcast", binary_case!([1], [3, 4], |t, x, c| t.mul(x, c))),
        ("minimum", binary_case!([3, 4], [3, 4], |t, x, c| t.minimum(x, c))),
        ("neg", unary_case!([3, 4], -2.0, 2.0, |t, x| ok(t.neg(x)))),
        ("scale", unary_case!([3, 4], -2.0, 2.0, |t, x| ok(t.scale(x, -1.7)))),
        ("offset", unary_case!([3, 4], -2.0, 2.0, |t, x| ok(t.offset(x, 0.3)))),
        ("relu", unary_case!([3, 4], -2.0, 2.0, |t, x| ok(t.relu(x)))),
        ("tanh", unary_case!([3, 4], -2.0, 2.0, |t, x| ok(t.tanh(x)))),
        ("exp", unary_case!([3, 4], -2.0, 2.0, |t, x| ok(t.exp(x)))),
        ("ln", unary_case!([3, 4], 0.2, 3.0, |t, x| ok(t.ln(x)))),
        ("softplus", unary_case!([3, 4], -4.0, 4.0, |t, x| ok(t.softplus(x)))),
        ("square", unary_case!([3, 4], -2.0, 2.0, |t, x| ok(t.square(x)))),
        (
            "clamp",
            unary_case!([3, 4], -2.0, 2.0, |t, x| ok(t.clamp(x, -1.0, 0.5))),
        ),
        ("add_bias.input", binary_case!([3, 4], [4], |t, x, c| t.add_bias(x, c))),
        ("add_bias.bias", binary_case!([4], [3, 4], |t, x, c| t.add_bias(c, x))),
        ("sum", unary_case!([3, 4], -2.0, 2.0, |t, x| ok(t.sum(x)))),
        ("mean", unary_case!([3, 4], -2.0, 2.0, |t, x| ok(t.mean(x)))),
        ("sum_cols", unary_case!([3, 4], -2.0, 2.0, |t, x| t.sum_cols(x))),
        (
            "concat_cols.lhs",
            binary_case!([3, 2], [3, 4], |t, x, c| t.concat_cols(x, c)),
        ),
        (
            "concat_cols.rhs",
            binary_case!([3, 2], [3, 4], |t, x, c| t.concat_cols(c, x)),
        ),
        (
            "slice_cols",
            unary_case!([3, 5], -2.0, 2.0, |t, x| t.slice_cols(x, 1, 4)),
        ),
        (
            "gather_cols",
            unary_case!([4, 3], -2.0, 2.0, |t, x| t.gather_cols(x, &[2, 0, 0, 1])),
        ),
        (
            "repeat_rows",
            unary_case!([3, 2], -2.0, 2.0, |t, x| t.repeat_rows(x, 3)),
        ),
        ("reshape", unary_case!([3, 4], -2.0, 2.0, |t, x| t.reshape(x, &[2, 6]))),
        (
            "cosine.vector",
            binary_case!([5], [5], |t, x, c| t.cosine_similarity(x, c)),
        ),
        (
            "cosine.rows",
            binary_case!([3, 5], [3, 5], |t, x, c| t.cosine_similarity(c, x)),
        ),
        ("matmul.gram", unary_case!([3, 3], -2.0, 2.0, |t, x| t.matmul(x, x))),
    ]
}

/// Flat layout of several parameter tensors inside one `[1 x P]` input.
struct Pack {
    shapes: Vec<Vec<usize>>,
}

impl Pack {
    fn new() -> Self {
        Self { shapes: Vec::new() }
    }

    fn add(&mut self, tensors: &[&Tensor<f64>]) -> std::ops::Range<usize> {
        let start = self.shapes.len();
        self.shapes.extend(tensors.iter().map(|t| t.shape().to_vec()));
        start..self.shapes.len()
    }

    fn flatten(&self, tensors: &[&Tensor<f64>]) -> Tensor<f64> {
        let data: Vec<f64> = tensors.iter().flat_map(|t| t.data().iter().copied()).collect();
        let n = data.len();
        Tensor::matrix(1, n, data).expect("non-empty pack")
    }

    fn unpack(&self, tape: &mut Tape<f64>, x: Var) -> Result<Vec<Var>> {
        let mut start = 0;
        let mut out = Vec::with_capacity(self.shapes.len());
        for shape in &self.shapes {
            let n: usize = shape.iter().product();
            let s = tape.slice_cols(x, start, start + n)?;
            out.push(tape.reshape(s, shape)?);
            start += n;
        }
        Ok(out)
    }
}

const B: usize = 2;
const DZ: usize = 3;
const DP: usize = 3;
const HID: usize = 5;
const K: usize = 2;
const M: usize = 2;
const NA: usize = 3;

fn instance_seed(rng: &mut StreamRng) -> u64 {
    rng.gen()
}

fn q_loss_case(rng: &mut StreamRng) -> (Tensor<f64>, Loss) {
    let q = QHead::<f64>::new(DZ, HID, NA, QConfig::default(), instance_seed(rng));
    let z = randn(rng, &[B, DZ]);
    let next_online = randn(rng, &[B, DZ]);
    let next_target = randn(rng, &[B, DZ]);
    let actions: Vec<usize> = (0..B).map(|_| rng.gen_range(0..NA)).collect();
    let returns: Vec<f64> = (0..B).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let discounts: Vec<f64> = (0..B).map(|_| if rng.gen_bool(0.2) { 0.0 } else { 0.97 }).collect();
    let mut pack = Pack::new();
    pack.add(&[&z]);
    let params = q.online.parameters();
    let p_range = pack.add(&params);
    let mut all = vec![&z];
    all.extend(params);
    let x = pack.flatten(&all);
    let f: Loss = Box::new(move |tape, x| {
        let vars = pack.unpack(tape, x)?;
        let mut bq = q.bind(tape);
        bq.online = BoundMlp::from_vars(&vars[p_range.clone()]);
        let no = tape.constant(next_online.clone());
        let nt = tape.constant(next_target.clone());
        bq.loss(tape, vars[0], &actions, no, nt, &returns, &discounts)
    });
    (x, f)
}

struct SacFixture {
    sac: SacHead<f64>,
    z: Tensor<f64>,
    next_online: Tensor<f64>,
    next_target: Tensor<f64>,
    actions: Tensor<f64>,
    rewards: Vec<f64>,
    discounts: Vec<f64>,
    next_noise: Tensor<f64>,
    actor_noise: Tensor<f64>,
}

fn sac_fixture(rng: &mut StreamRng) -> SacFixture {
    let da = 2;
    SacFixture {
        sac: SacHead::new(DZ, HID, da, SacConfig::default(), instance_seed(rng)),
        z: randn(rng, &[B, DZ]),
        next_online: randn(rng, &[B, DZ]),
        next_target: randn(rng, &[B, DZ]),
        actions: uniform(rng, &[B, da], -0.9, 0.9),
        rewards: (0..B).map(|_| rng.gen_range(-1.0..0.0)).collect(),
        discounts: vec![0.99; B],
        next_noise: randn(rng, &[B, da]),
        actor_noise: randn(rng, &[B, da]),
    }
}

fn sac_critic_case(rng: &mut StreamRng) -> (Tensor<f64>, Loss) {
    let fx = sac_fixture(rng);
    let mut pack = Pack::new();
    pack.add(&[&fx.z]);
    let c1 = fx.sac.critic1.parameters();
    let c2 = fx.sac.critic2.parameters();
    let r1 = pack.add(&c1);
    let r2 = pack.add(&c2);
    let mut all = vec![&fx.z];
    all.extend(c1);
    all.extend(c2);
    let x = pack.flatten(&all);
    let f: Loss = Box::new(move |tape, x| {
        let vars = pack.unpack(tape, x)?;
        let mut bs = fx.sac.bind(tape);
        bs.critic1 = BoundMlp::from_vars(&vars[r1.clone()]);
        bs.critic2 = BoundMlp::from_vars(&vars[r2.clone()]);
        let no = tape.constant(fx.next_online.clone());
        let nt = tape.constant(fx.next_target.clone());
        bs.critic_loss(
            tape,
            vars[0],
            &fx.actions,
            &fx.rewards,
            &fx.discounts,
            no,
            nt,
            &fx.next_noise,
            fx.sac.alpha(),
        )
    });
    (x, f)
}

fn sac_actor_case(rng: &mut StreamRng) -> (Tensor<f64>, Loss) {
    let fx = sac_fixture(rng);
    let mut pack = Pack::new();
    let params = fx.sac.actor.parameters();
    let range = pack.add(&params);
    let x = pack.flatten(&params);
    let f: Loss = Box::new(move |tape, x| {
        let vars = pack.unpack(tape, x)?;
        let mut bs = fx.sac.bind(tape);
        bs.actor = BoundMlp::from_vars(&vars[range.clone()]);
        let z = tape.constant(fx.z.clone());
        Ok(bs.actor_loss(tape, z, &fx.actor_noise, fx.sac.alpha())?.0)
    });
    (x, f)
}

/// Networks shared by the auxiliary-loss cases.
struct AuxFixture {
    heads: ProjectionHeads<f64>,
    dm: DynamicsModel<f64>,
    bdm: DynamicsModel<f64>,
    z: Tensor<f64>,
    targets: Vec<Tensor<f64>>,
    actions: Vec<Tensor<f64>>,
    virtual_actions: Vec<Tensor<f64>>,
}

fn aux_fixture(rng: &mut StreamRng) -> AuxFixture {
    let space = ActionSpace::Discrete(NA);
    let real: Vec<Vec<Action>> = (0..B).map(|_| (0..K).map(|_| space.sample(rng)).collect()).collect();
    let real_refs: Vec<&[Action]> = real.iter().map(Vec::as_slice).collect();
    let sets = sample_action_sets(space, B, M, K, rng);
    AuxFixture {
        heads: ProjectionHeads::new(DZ, DP, rng),
        dm: DynamicsModel::new(DZ, NA, rng),
        bdm: DynamicsModel::new(DZ, NA, rng),
        z: randn(rng, &[B, DZ]),
        targets: (0..K).map(|_| randn(rng, &[B, DZ])).collect(),
        actions: encode_segment_actions(space, &real_refs).expect("segment actions"),
        virtual_actions: encode_virtual_actions(space, &sets).expect("virtual actions"),
    }
}

/// Packs `z`, the selected networks and the online heads; returns the
/// flat input and the ranges of each group.
struct AuxPack {
    pack: Pack,
    dm: Option<std::ops::Range<usize>>,
    bdm: Option<std::ops::Range<usize>>,
    projector: std::ops::Range<usize>,
    predictor: std::ops::Range<usize>,
}

fn aux_pack(fx: &AuxFixture, with_dm: bool, with_bdm: bool) -> (Tensor<f64>, AuxPack) {
    let mut pack = Pack::new();
    let mut all = vec![&fx.z];
    pack.add(&[&fx.z]);
    fn group<'a>(
        pack: &mut Pack,
        all: &mut Vec<&'a Tensor<f64>>,
        params: Vec<&'a Tensor<f64>>,
    ) -> std::ops::Range<usize> {
        let r = pack.add(&params);
        all.extend(params);
        r
    }
    let dm = with_dm.then(|| group(&mut pack, &mut all, fx.dm.parameters()));
    let bdm = with_bdm.then(|| group(&mut pack, &mut all, fx.bdm.parameters()));
    let projector = group(&mut pack, &mut all, fx.heads.projector.parameters());
    let predictor = group(&mut pack, &mut all, fx.heads.predictor.parameters());
    let x = pack.flatten(&all);
    (
        x,
        AuxPack {
            pack,
            dm,
            bdm,
            projector,
            predictor,
        },
    )
}

fn bound_heads(fx: &AuxFixture, ap: &AuxPack, tape: &mut Tape<f64>, vars: &[Var]) -> BoundHeads {
    let mut heads = fx.heads.bind(tape, false);
    heads.projector = BoundMlp::from_vars(&vars[ap.projector.clone()]);
    heads.predictor = BoundMlp::from_vars(&vars[ap.predictor.clone()]);
    heads
}

fn constants(tape: &mut Tape<f64>, ts: &[Tensor<f64>]) -> Vec<Var> {
    ts.iter().map(|t| tape.constant(t.clone())).collect()
}

fn pred_case(rng: &mut StreamRng) -> (Tensor<f64>, Loss) {
    let fx = aux_fixture(rng);
    let (x, ap) = aux_pack(&fx, true, false);
    let f: Loss = Box::new(move |tape, x| {
        let vars = ap.pack.unpack(tape, x)?;
        let heads = bound_heads(&fx, &ap, tape, &vars);
        let dm = fx.dm.bind_vars(&vars[ap.dm.clone().expect("dm packed")]);
        let actions = constants(tape, &fx.actions);
        let targets = constants(tape, &fx.targets);
        prediction_loss(tape, &heads, vars[0], &actions, &targets, &dm)
    });
    (x, f)
}

fn backward_pred_case(rng: &mut StreamRng) -> (Tensor<f64>, Loss) {
    let fx = aux_fixture(rng);
    let (x, ap) = aux_pack(&fx, false, true);
    let f: Loss = Box::new(move |tape, x| {
        let vars = ap.pack.unpack(tape, x)?;
        let heads = bound_heads(&fx, &ap, tape, &vars);
        let bdm = fx.bdm.bind_vars(&vars[ap.bdm.clone().expect("bdm packed")]);
        let actions = constants(tape, &fx.actions);
        let targets = constants(tape, &fx.targets);
        backward_prediction_loss(tape, &heads, vars[0], &actions, &targets, &bdm)
    });
    (x, f)
}

fn cycle_case(metric: Metric, nd_mode: bool, rng: &mut StreamRng) -> (Tensor<f64>, Loss) {
    let fx = aux_fixture(rng);
    let reference = randn(rng, &[B, DZ]);
    let (x, ap) = aux_pack(&fx, !nd_mode, true);
    let f: Loss = Box::new(move |tape, x| {
        let vars = ap.pack.unpack(tape, x)?;
        let heads = bound_heads(&fx, &ap, tape, &vars);
        let dm = match &ap.dm {
            Some(r) => fx.dm.bind_vars(&vars[r.clone()]),
            None => fx.dm.bind(tape, false),
        };
        let bdm = fx.bdm.bind_vars(&vars[ap.bdm.clone().expect("bdm packed")]);
        let actions = constants(tape, &fx.virtual_actions);
        let reference = match metric {
            Metric::Projection => tape.constant(reference.clone()),
            Metric::Latent => tape.constant(fx.z.clone()),
        };
        cycle_loss(tape, &heads, metric, vars[0], reference, &actions, M, &dm, &bdm)
    });
    (x, f)
}

fn loss_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("loss.q", q_loss_case as Case),
        ("loss.sac_critic", sac_critic_case),
        ("loss.sac_actor", sac_actor_case),
        ("loss.pred", pred_case),
        ("loss.backward_pred", backward_pred_case),
        ("loss.cyc", |rng| cycle_case(Metric::Projection, false, rng)),
        ("loss.cyc_latent", |rng| cycle_case(Metric::Latent, false, rng)),
        ("loss.cyc_nd", |rng| cycle_case(Metric::Projection, true, rng)),
    ]
}

/// Names of every check in [`gradient_suite`], ops first.
pub fn check_names() -> Vec<&'static str> {
    op_cases().into_iter().chain(loss_cases()).map(|(n, _)| n).collect()
}

/// Runs each op and loss check on `instances` random instances.
pub fn gradient_suite(instances: usize, seed: u64, tolerance: f64) -> Result<Vec<CheckSummary>> {
    op_cases()
        .into_iter()
        .chain(loss_cases())
        .map(|(name, case)| {
            let mut rng = rng::stream(seed, name);
            let mut summary = CheckSummary {
                name,
                instances,
                max_rel_error: 0.0,
                excluded: 0,
                checked: 0,
                passed: true,
            };
            for _ in 0..instances {
                let (x, f) = case(&mut rng);
                let report = grad_check(f, &x, tolerance)?;
                summary.max_rel_error = summary.max_rel_error.max(report.max_rel_error);
                summary.excluded += report.excluded.len();
                summary.checked += report.checked;
                summary.passed &= report.passed;
            }
            Ok(summary)
        })
        .collect()
}
