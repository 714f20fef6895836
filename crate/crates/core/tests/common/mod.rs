#![allow(dead_code)]

use mirec::data::synthetic::toy_features;
use mirec::data::{EncodedFeatures, Interaction};
use mirec::model::{
    joint_loss, joint_loss_grad, softmax_batch_loss, softmax_batch_loss_grad, CandidateMode, MapperKind, MetaMapper, ModelSpec, SoftmaxSpec,
    TwoTowerParams,
};
use mirec::numeric::gradcheck::{max_relative_error, numeric_param_gradients, DEFAULT_STEP, RELATIVE_ERROR_FLOOR};
use mirec::numeric::{ParamBlock, Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random small problem; every tower width is at most 8.
pub struct Instance {
    pub features: EncodedFeatures,
    pub theta: TwoTowerParams,
    pub theta_star: TwoTowerParams,
    pub mapper: MetaMapper,
    pub batch: Vec<Interaction>,
    pub probs: Vec<f64>,
    pub weights: Vec<f64>,
    pub mode: CandidateMode,
    pub lambda_logq: Option<f64>,
    pub use_weights: bool,
    pub lambda_reg: f64,
}

impl Instance {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_users = rng.gen_range(2..=5);
        let n_items = rng.gen_range(2..=6);
        let features = toy_features(n_users, n_items, seed);
        let dim = rng.gen_range(1..=2) * 2;
        let depth = if dim == 2 { rng.gen_range(0..=2) } else { rng.gen_range(0..=1) };
        let field_dim = rng.gen_range(1..=3);
        let spec = ModelSpec::for_features(&features, dim, field_dim, depth);
        let theta = TwoTowerParams::new(&spec, rng.gen()).unwrap();
        let theta_star = TwoTowerParams::new(&spec, rng.gen()).unwrap();
        let kind = if rng.gen_bool(0.5) { MapperKind::PerUnit } else { MapperKind::Dense };
        let mut mapper = MetaMapper::identity(&theta, kind);
        for b in mapper.blocks_mut() {
            b.values.mapv_inplace(|v| v + rng.gen_range(-0.3..0.3));
        }
        let len = rng.gen_range(1..=8);
        let batch = (0..len)
            .map(|_| Interaction {
                user: rng.gen_range(0..n_users as u32),
                item: rng.gen_range(0..n_items as u32),
                reward: 1,
                timestamp: None,
            })
            .collect();
        let raw: Vec<f64> = (0..n_items).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        Instance {
            features,
            theta,
            theta_star,
            mapper,
            batch,
            probs: raw.iter().map(|p| p / total).collect(),
            weights: (0..n_items).map(|_| rng.gen_range(0.2..2.0)).collect(),
            mode: if rng.gen_bool(0.5) { CandidateMode::InBatch } else { CandidateMode::FullCatalog },
            lambda_logq: rng.gen_bool(0.7).then(|| rng.gen_range(0.1..1.5)),
            use_weights: rng.gen_bool(0.3),
            lambda_reg: rng.gen_range(0.05..1.0),
        }
    }

    pub fn spec(&self) -> SoftmaxSpec<'_> {
        SoftmaxSpec {
            mode: self.mode,
            logq: self.lambda_logq.map(|l| (self.probs.as_slice(), l)),
            item_weights: self.use_weights.then_some(self.weights.as_slice()),
        }
    }
}

fn named(blocks: &[&ParamBlock]) -> Vec<(String, ndarray::Array2<f64>)> {
    blocks.iter().map(|b| (b.name.clone(), b.grad.clone())).collect()
}

/// Max relative error of ∂L_g/∂θ against central differences.
pub fn check_softmax(inst: &Instance) -> (f64, String) {
    let spec = inst.spec();
    let mut theta = inst.theta.clone();
    theta.zero_grad();
    softmax_batch_loss_grad(&mut theta, &inst.features, &inst.batch, &spec, 1.0).unwrap();
    let analytic = named(&theta.blocks());
    let mut probe = inst.theta.clone();
    let numeric = numeric_param_gradients(
        &mut probe,
        |t| t.blocks_mut(),
        |t| softmax_batch_loss(t, &inst.features, &inst.batch, &spec).unwrap().loss,
        DEFAULT_STEP,
    );
    max_relative_error(analytic.iter().map(|(n, g)| (n.as_str(), g)), &numeric, RELATIVE_ERROR_FLOOR)
}

/// Max relative error of ∂L/∂w and ∂L/∂θ of the joint loss.
pub fn check_joint(inst: &Instance) -> (f64, String) {
    let spec = inst.spec();
    let (mut w, mut theta) = (inst.mapper.clone(), inst.theta.clone());
    w.zero_grad();
    theta.zero_grad();
    let star = &inst.theta_star;
    joint_loss_grad(&mut w, &mut theta, star, &inst.features, &inst.batch, &spec, inst.lambda_reg).unwrap();
    let mut blocks = w.blocks();
    blocks.extend(theta.blocks());
    let analytic = named(&blocks);

    let mut probe = (inst.mapper.clone(), inst.theta.clone());
    let numeric = numeric_param_gradients(
        &mut probe,
        |(w, t)| {
            let mut v = w.blocks_mut();
            v.extend(t.blocks_mut());
            v
        },
        |(w, t)| joint_loss(w, t, star, &inst.features, &inst.batch, &spec, inst.lambda_reg).unwrap().total,
        DEFAULT_STEP,
    );
    max_relative_error(analytic.iter().map(|(n, g)| (n.as_str(), g)), &numeric, RELATIVE_ERROR_FLOOR)
}

/// Runs both checks on `n` random instances; returns the worst error and
/// where it occurred.
pub fn gradient_suite(n: u64) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for seed in 0..n {
        let inst = Instance::random(seed);
        for (what, (e, block)) in [("softmax", check_softmax(&inst)), ("joint", check_joint(&inst))] {
            if e > worst.0 || e.is_nan() {
                worst = (e, format!("seed {seed} {what} {block}"));
            }
        }
    }
    worst
}
