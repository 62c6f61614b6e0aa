use hns_core::dataset::{InteractionSet, Role};
use hns_core::rng;
use hns_core::sampler::SamplerSpec;
use hns_core::trainer::{
    adam_step, plan_batch, plan_gradient, surrogate_loss, train, weighted_loss, AdamConfig,
    AdamState, Checkpoint, MfModel, SparseGrad, TrainConfig,
};
use proptest::prelude::*;

fn instance(seed: u64, n_ctx: usize, n_items: usize, dim: usize) -> (MfModel<f64>, InteractionSet) {
    let model = MfModel::init_uniform(n_ctx, n_items, dim, &mut rng::stream(seed, "model", 0));
    let lists = (0..n_ctx)
        .map(|c| (0..3).map(|k| ((c * 7 + k * 5 + seed as usize) % n_items) as u32).collect())
        .collect();
    (model, InteractionSet::from_lists(n_items, lists, Role::Train).unwrap())
}

fn spec() -> impl Strategy<Value = SamplerSpec> {
    prop_oneof![
        Just(SamplerSpec::Uniform { pool: 6 }),
        Just(SamplerSpec::Popularity { pool: 6 }),
        (0.1f64..3.0).prop_map(|tau| SamplerSpec::FixedSoftmax { tau, pool: 6 }),
        (1usize..=6).prop_map(|m| SamplerSpec::Dns { m, pool: 6 }),
        (0.1f64..20.0).prop_map(|rho| SamplerSpec::SoftmaxV { rho, pool: 6 }),
    ]
}

/// Fourth-order central difference of `loss` in one parameter; the
/// parameter is restored afterwards.
fn five_point(
    model: &mut MfModel<f64>,
    h: f64,
    param: impl Fn(&mut MfModel<f64>) -> &mut f64,
    loss: impl Fn(&MfModel<f64>) -> f64,
) -> f64 {
    let orig = *param(model);
    let mut at = |x: f64| {
        *param(model) = x;
        loss(model)
    };
    let d = (-at(orig + 2.0 * h) + 8.0 * at(orig + h) - 8.0 * at(orig - h) + at(orig - 2.0 * h)) / (12.0 * h);
    *param(model) = orig;
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..1000, spec in spec()) {
        let (mut model, train) = instance(seed, 3, 12, 4);
        let counts = train.item_counts();
        let pairs: Vec<(u32, u32)> = train.pairs().collect();
        let (plans, _) = plan_batch(&model, &train, &pairs, &spec, Some(&counts), false, &mut rng::stream(seed, "plan", 0));
        let grad = plan_gradient(&model, &plans);
        let h = 1e-3;
        for j in 0..12u32 {
            for k in 0..4 {
                let numeric = five_point(&mut model, h, |m| &mut m.item_row_mut(j)[k], |m| weighted_loss(m, &plans));
                let analytic = grad.item(j).map_or(0.0, |g| g[k]);
                prop_assert!((analytic - numeric).abs() <= 1e-5 * analytic.abs().max(numeric.abs()).max(1e-6),
                    "item {j}[{k}]: {analytic} vs {numeric}");
            }
        }
        for c in 0..3u32 {
            for k in 0..4 {
                let numeric = five_point(&mut model, h, |m| &mut m.context_row_mut(c)[k], |m| weighted_loss(m, &plans));
                let analytic = grad.context(c).map_or(0.0, |g| g[k]);
                prop_assert!((analytic - numeric).abs() <= 1e-5 * analytic.abs().max(numeric.abs()).max(1e-6));
            }
        }
    }

    #[test]
    fn weighted_loss_is_explicit_sum(seed in 0u64..1000, spec in spec()) {
        let (model, train) = instance(seed, 4, 15, 3);
        let pairs: Vec<(u32, u32)> = train.pairs().collect();
        let (plans, _) = plan_batch(&model, &train, &pairs, &spec, None, false, &mut rng::stream(seed, "plan", 1));
        let mut total = 0.0;
        for plan in &plans {
            for (j, p) in plan.dist.iter() {
                let r_ci: f64 = model.context_row(plan.c).iter().zip(model.item_row(plan.i)).map(|(a, b)| a * b).sum();
                let r_cj: f64 = model.context_row(plan.c).iter().zip(model.item_row(j)).map(|(a, b)| a * b).sum();
                total += p * surrogate_loss(r_ci - r_cj);
            }
        }
        let oracle = total / plans.len() as f64;
        prop_assert!((weighted_loss(&model, &plans) - oracle).abs() <= 1e-12);
    }

    #[test]
    fn adam_matches_scalar_reference(grads in prop::collection::vec(-2.0f64..2.0, 1..12), lr in 1e-4f64..0.1, wd in 0.0f64..0.5) {
        let cfg = AdamConfig { learning_rate: lr, weight_decay: wd, ..AdamConfig::default() };
        let mut model = MfModel::<f64>::zeros(1, 1, 1);
        model.item_row_mut(0)[0] = 0.7;
        let mut state = AdamState::new(&model);
        let (mut theta, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            let mut sg = SparseGrad::new(1);
            sg.item_mut(0)[0] = g;
            adam_step(&mut model, &sg, &cfg, &mut state).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let v_hat = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            theta = theta * (1.0 - lr * wd) - lr * m_hat / (v_hat.sqrt() + 1e-8);
            prop_assert!((model.item_row(0)[0] - theta).abs() <= 1e-12);
        }
    }
}

#[test]
fn untouched_rows_stay_put() {
    let (mut model, _) = instance(3, 2, 5, 2);
    let before = model.clone();
    let mut state = AdamState::new(&model);
    let mut g = SparseGrad::new(2);
    g.item_mut(1).copy_from_slice(&[0.3, -0.1]);
    let cfg = AdamConfig { weight_decay: 0.1, ..AdamConfig::default() };
    adam_step(&mut model, &g, &cfg, &mut state).unwrap();
    for j in [0u32, 2, 3, 4] {
        assert_eq!(model.item_row(j), before.item_row(j));
    }
    assert_eq!(model.context_table(), before.context_table());
    assert_ne!(model.item_row(1), before.item_row(1));
}

#[test]
fn training_keeps_norms_finite_under_every_sampler() {
    let (_, train_set) = instance(9, 8, 30, 4);
    for sampler in [
        SamplerSpec::Uniform { pool: 1 },
        SamplerSpec::Popularity { pool: 5 },
        SamplerSpec::FixedSoftmax { tau: 0.5, pool: 10 },
        SamplerSpec::Dns { m: 2, pool: 10 },
        SamplerSpec::SoftmaxV { rho: 1.0, pool: 10 },
    ] {
        let cfg = TrainConfig { dim: 4, epochs: 15, batch_size: 6, learning_rate: 0.05, weight_decay: 0.01, sampler, seed: 2, ..TrainConfig::default() };
        let out = train::<f64>(&train_set, None, &cfg).unwrap();
        let (nc, ni) = out.model.norms();
        assert!(nc.is_finite() && ni.is_finite(), "{}", sampler.label());
        assert!(out.log.final_loss().unwrap() < out.log.initial_loss, "{}", sampler.label());
    }
}

#[test]
fn single_draw_training_is_deterministic_too() {
    let (_, train_set) = instance(4, 6, 20, 3);
    let cfg = TrainConfig { dim: 3, epochs: 4, batch_size: 5, single_draw: true, sampler: SamplerSpec::SoftmaxV { rho: 2.0, pool: 8 }, seed: 5, ..TrainConfig::default() };
    let a = train::<f32>(&train_set, None, &cfg).unwrap();
    let b = train::<f32>(&train_set, None, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    let maps = train_set.id_maps();
    let ja = Checkpoint::new(&a.model, maps, Some(&a.optimizer)).to_json().unwrap();
    let jb = Checkpoint::new(&b.model, maps, Some(&b.optimizer)).to_json().unwrap();
    assert_eq!(ja, jb);
}
