use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use varnet::attributes::{AttributeBlock, AttributeFunction, AttributeSpec};
use varnet::data::{Dataset, ExampleBatch, Metadata};
use varnet::gaussian::{gaussian_kl, gaussian_log_likelihood, standard_normal, GaussianPosterior};
use varnet::model::{ModelConfig, VarNet};
use varnet::params::ParamStore;
use varnet::training::{
    disc_loss_from_scores, disc_phase, encdec_adversarial_loss_from_scores, encdec_phase, fit, train_step, HyperParams, TrainState,
};
use varnet::Tensor;

fn free(d: usize, d_psi: usize) -> AttributeBlock {
    AttributeBlock::Free {
        d,
        d_psi,
        attention_hidden: vec![8],
        nu_alpha: Default::default(),
    }
}

fn discrete(m: usize, d_psi: usize) -> AttributeBlock {
    AttributeBlock::FixedDiscrete {
        m,
        d_psi,
        field: 0,
        vocabulary: None,
    }
}

fn tiny_inputs(n: usize, d: usize, seed: u64) -> (Tensor, Metadata) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = standard_normal(n, d, &mut rng).map(|v| 1.0 / (1.0 + (-v).exp()));
    let labels = (0..n).map(|i| (i * 7 + seed as usize) % 3).collect();
    (x, Metadata::with_labels(labels))
}

fn sorted_rows(t: &Tensor) -> Vec<Vec<u64>> {
    let mut rows: Vec<Vec<u64>> = (0..t.rows()).map(|r| t.row(r).iter().map(|v| v.to_bits()).collect()).collect();
    rows.sort();
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative(mu in prop::collection::vec(-5.0f64..5.0, 1..8), s in prop::collection::vec(0.01f64..10.0, 8)) {
        let d = mu.len();
        let post = GaussianPosterior::new(Tensor::row_vector(mu), Tensor::row_vector(s[..d].to_vec())).unwrap();
        prop_assert!(gaussian_kl(&post)[0] >= 0.0);
    }

    #[test]
    fn kl_vanishes_only_at_standard_normal(d in 1usize..8, k in 0usize..8, bump in prop_oneof![-1.0f64..-0.01, 0.01f64..1.0], on_mu in any::<bool>()) {
        let std = GaussianPosterior::new(Tensor::zeros(1, d), Tensor::filled(1, d, 1.0)).unwrap();
        prop_assert_eq!(gaussian_kl(&std)[0], 0.0);
        let (mut mu, mut s) = (vec![0.0; d], vec![1.0; d]);
        if on_mu { mu[k % d] = bump } else { s[k % d] = 1.0 + bump * 0.5 }
        let post = GaussianPosterior::new(Tensor::row_vector(mu), Tensor::row_vector(s)).unwrap();
        prop_assert!(gaussian_kl(&post)[0] > 0.0);
    }

    #[test]
    fn log_likelihood_peaks_at_mean(mu in prop::collection::vec(0.0f64..1.0, 1..16), sigma in 0.05f64..3.0, i in 0usize..16, h in prop_oneof![-0.5f64..-1e-3, 1e-3f64..0.5]) {
        let best = gaussian_log_likelihood(&mu, &mu, sigma).unwrap();
        let mut x = mu.clone();
        let k = i % x.len();
        x[k] += h;
        prop_assert!(gaussian_log_likelihood(&x, &mu, sigma).unwrap() < best);
    }

    #[test]
    fn adversarial_losses_negate_on_equal_scores(s in prop::collection::vec(0.0f64..=1.0, 1..32)) {
        let sum = disc_loss_from_scores(&s, &s).unwrap() + encdec_adversarial_loss_from_scores(&s, &s).unwrap();
        prop_assert!(sum.abs() <= 1e-12, "{}", sum);
    }

    #[test]
    fn adversarial_sum_is_logit_gap(pairs in prop::collection::vec((0.001f64..0.999, 0.001f64..0.999), 1..32)) {
        let (p, d): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let logit = |v: &[f64]| v.iter().map(|x| (x / (1.0 - x)).ln()).sum::<f64>() / v.len() as f64;
        let sum = disc_loss_from_scores(&p, &d).unwrap() + encdec_adversarial_loss_from_scores(&p, &d).unwrap();
        prop_assert!((sum - (logit(&p) - logit(&d))).abs() < 1e-10);
    }

    #[test]
    fn attribute_eval_is_deterministic_and_in_zonotope(seed in 0u64..1000, d in 1usize..4) {
        let spec = AttributeSpec::new(vec![free(d, 6), discrete(3, 4)]).unwrap();
        let mut store = ParamStore::new();
        let f = AttributeFunction::new(spec, 5, &mut store, &mut ChaCha8Rng::seed_from_u64(seed));
        let (x, meta) = tiny_inputs(12, 5, seed);
        let a = f.eval(&store, &x, &meta).unwrap();
        let b = f.eval(&store, &x, &meta).unwrap();
        prop_assert_eq!(a.data(), b.data());
        let alpha = f.eval_alphas(&store, &x, &meta).unwrap()[0].clone().unwrap();
        prop_assert!(alpha.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let v = store.value(store.find("attr.0.basis").unwrap());
        let recon = varnet::kernels::matmul(alpha.data(), v.data(), alpha.rows(), d, 6);
        for (p, q) in recon.iter().zip(a.slice_cols(0, 6).data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_equals_independent_blocks(seed in 0u64..1000) {
        let blocks = vec![free(2, 3), discrete(3, 4), free(1, 2)];
        let mut store = ParamStore::new();
        let f = AttributeFunction::new(AttributeSpec::new(blocks.clone()).unwrap(), 5, &mut store, &mut ChaCha8Rng::seed_from_u64(seed));
        let (x, meta) = tiny_inputs(9, 5, seed);
        let whole = f.eval(&store, &x, &meta).unwrap();
        let mut parts = Vec::new();
        for (i, b) in blocks.into_iter().enumerate() {
            let mut solo_store = ParamStore::new();
            let solo = AttributeFunction::new(AttributeSpec::new(vec![b]).unwrap(), 5, &mut solo_store, &mut ChaCha8Rng::seed_from_u64(99));
            for e in solo_store.entries().to_vec() {
                let src = e.name.replacen("attr.0", &format!("attr.{i}"), 1);
                let id = solo_store.find(&e.name).unwrap();
                *solo_store.value_mut(id) = store.value(store.find(&src).unwrap()).clone();
            }
            parts.push(solo.eval(&solo_store, &x, &meta).unwrap());
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        prop_assert_eq!(whole, Tensor::concat_cols(&refs).unwrap());
    }

    #[test]
    fn shuffle_prior_preserves_multiset(seed in 0u64..1000, n in 1usize..20) {
        let spec = AttributeSpec::new(vec![discrete(3, 4)]).unwrap();
        let mut store = ParamStore::new();
        let f = AttributeFunction::new(spec, 5, &mut store, &mut ChaCha8Rng::seed_from_u64(seed));
        let (x, meta) = tiny_inputs(n, 5, seed);
        let own = f.eval(&store, &x, &meta).unwrap();
        let prior = f.sample_prior(&store, Some((&x, &meta)), n, &mut ChaCha8Rng::seed_from_u64(seed + 1)).unwrap();
        prop_assert_eq!(sorted_rows(&own), sorted_rows(&prior));
    }

    #[test]
    fn decoder_responds_to_attributes_until_ablated(seed in 0u64..200) {
        let spec = AttributeSpec::new(vec![free(2, 4)]).unwrap();
        let mut model = VarNet::new(ModelConfig::mlp(3, [1, 4, 4], 16), spec, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = standard_normal(1, 3, &mut rng).select_rows(&[0; 6]);
        let psi = standard_normal(6, 4, &mut rng);
        let spread = |m: &VarNet| {
            let out = m.decode(&z, &psi).unwrap().mu;
            (1..6).map(|r| out.select_rows(&[r]).sq_dist(&out.select_rows(&[0]))).sum::<f64>()
        };
        prop_assert!(spread(&model) > 0.0);
        model.ablate_conditioning();
        prop_assert_eq!(spread(&model), 0.0);
    }
}

fn tiny_state(seed: u64) -> (TrainState, ExampleBatch, HyperParams) {
    let spec = AttributeSpec::new(vec![free(2, 3), discrete(3, 4)]).unwrap();
    let hp = HyperParams {
        batch_size: 8,
        ..HyperParams::default()
    };
    let mut cfg = ModelConfig::mlp(3, [1, 4, 4], 16);
    cfg.discriminator.hidden = vec![16, 16, 16];
    let state = TrainState::init(cfg, spec, &hp, seed).unwrap();
    let (x, meta) = tiny_inputs(8, 16, seed);
    (state, ExampleBatch::new(x, meta).unwrap(), hp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn report_total_reassembles_from_terms(seed in 0u64..500, beta in 0.0f64..4.0, gamma in 0.0f64..20.0) {
        let (mut state, batch, mut hp) = tiny_state(seed);
        hp.beta = beta;
        hp.gamma = gamma;
        for _ in 0..3 {
            let r = train_step(&mut state, &batch, &hp).unwrap();
            let again = r.re_n + beta * r.kl_n + gamma * r.r_disc_n;
            prop_assert!((r.total - again).abs() <= 1e-12 * r.total.abs().max(1.0), "{} vs {}", r.total, again);
        }
    }

    #[test]
    fn phases_touch_disjoint_parameters(seed in 0u64..500) {
        let (mut state, batch, hp) = tiny_state(seed);
        let moved = |a: &ParamStore, b: &ParamStore, disc: bool| {
            a.entries().iter().zip(b.entries()).filter(|(p, q)| p.group.is_discriminator() == disc && p.value != q.value).count()
        };
        for _ in 0..2 {
            let before = state.model.store.clone();
            disc_phase(&mut state, &batch).unwrap();
            prop_assert_eq!(moved(&before, &state.model.store, false), 0);
            prop_assert!(moved(&before, &state.model.store, true) > 0);
            let before = state.model.store.clone();
            encdec_phase(&mut state, &batch, &hp).unwrap();
            prop_assert_eq!(moved(&before, &state.model.store, true), 0);
            prop_assert!(moved(&before, &state.model.store, false) > 0);
        }
    }
}

#[test]
fn seeded_fit_is_reproducible() {
    let data = varnet::data::synth::synth_digits(64, 4).unwrap();
    let run = || {
        let spec = AttributeSpec::new(vec![discrete(10, 4)]).unwrap();
        let hp = HyperParams {
            iters: 6,
            batch_size: 16,
            ..HyperParams::default()
        };
        let mut cfg = ModelConfig::mlp(4, [1, 28, 28], 16);
        cfg.discriminator.hidden = vec![8, 8, 8];
        let mut st = TrainState::init(cfg, spec, &hp, 11).unwrap();
        let reports = fit(&mut st, &data, &hp, &mut ()).unwrap();
        (reports, varnet::checkpoint::fingerprint(&st.model.store))
    };
    assert_eq!(run(), run());
}

#[test]
fn epochs_are_exhaustive_permutations() {
    let data: Dataset = varnet::data::synth::synth_digits(37, 1).unwrap();
    for epoch in 0..3 {
        assert_eq!(data.batches(10, 5, epoch).map(|b| b.len()).collect::<Vec<_>>(), [10, 10, 10, 7]);
        let mut seen = data.epoch_order(5, epoch);
        seen.sort_unstable();
        assert_eq!(seen, (0..37).collect::<Vec<_>>());
    }
}
