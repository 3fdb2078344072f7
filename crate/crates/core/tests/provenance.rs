mod common;

use common::{close, oracle_report, random_input, random_snapshot, reports_match, snapshot};
use neurontrace::nn::{ModelArch, ModelWeights, NeuronId};
use neurontrace::provenance::{activated_neurons, heatmap, neuron_influence, trace, trace_input, TraceOptions};
use neurontrace::{seed, Error};
use proptest::prelude::*;

fn detail_opts() -> TraceOptions {
    TraceOptions { detail: true, ..Default::default() }
}

/// Σ_k cont_k against c·pre for every activated neuron of one input.
fn check_reconstruction(arch: &ModelArch, snap: &neurontrace::flsim::RoundSnapshot, x: &[f64]) -> usize {
    let report = trace(snap, 0, x, None, &detail_opts()).unwrap();
    let t = arch.trace(&snap.global, x).unwrap();
    let detail = report.detail.unwrap();
    for d in &detail {
        let pre = t.pre_activation(d.layer).data()[d.index];
        let expected = d.influence * pre;
        let sum: f64 = d.contributions.values().sum();
        let scale: f64 = expected.abs().max(d.contributions.values().map(|v| v.abs()).sum());
        assert!(
            (sum - expected).abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE),
            "neuron {}:{} sum {sum} vs c·pre {expected}",
            d.layer,
            d.index
        );
    }
    detail.len()
}

#[test]
fn reconstruction_mlp() {
    let arch = ModelArch::mlp(vec![6], &[10, 8], 4).unwrap();
    let mut rng = seed::rng(7);
    let mut checked = 0;
    for case in 0..100 {
        let snap = random_snapshot(&arch, 3, 0.8, 1000 + case);
        checked += check_reconstruction(&arch, &snap, &random_input(6, &mut rng));
    }
    assert!(checked > 500);
}

#[test]
fn reconstruction_lenet() {
    let arch = ModelArch::lenet(vec![1, 10, 10], &[3, 4], 3, &[6], 3).unwrap();
    let mut rng = seed::rng(8);
    for case in 0..10 {
        let snap = random_snapshot(&arch, 3, 0.5, 50 + case);
        let x: Vec<f64> = (0..100).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect();
        assert!(check_reconstruction(&arch, &snap, &x) > 0);
    }
}

#[test]
fn engine_matches_scalar_oracle() {
    let mut rng = seed::rng(11);
    for case in 0..20u64 {
        let arch = match case % 3 {
            0 => ModelArch::mlp(vec![5], &[8], 3).unwrap(),
            1 => ModelArch::mlp(vec![4], &[12, 10], 5).unwrap(),
            _ => ModelArch::mlp(vec![7], &[16, 16, 16], 10).unwrap(),
        };
        assert!(arch.total_neurons() <= 64);
        let k = 2 + (case as usize % 2);
        let snap = random_snapshot(&arch, k, 0.7, 200 + case);
        let x = random_input(arch.input_len(), &mut rng);
        let engine = trace(&snap, case as usize, &x, None, &TraceOptions::default()).unwrap();
        let oracle = oracle_report(&snap, case as usize, &x, 0.0);
        reports_match(&engine, &oracle, 1e-9).unwrap_or_else(|e| panic!("case {case}: {e}"));
    }
}

#[test]
fn influence_matches_finite_differences() {
    let arch = ModelArch::mlp(vec![5], &[7, 6], 3).unwrap();
    let mut rng = seed::rng(3);
    let w = ModelWeights::uniform(&arch, 0.8, &mut rng);
    for _ in 0..10 {
        let x = random_input(5, &mut rng);
        let t = arch.trace(&w, &x).unwrap();
        let class = t.predicted_class();
        let set = activated_neurons(&t, 0.0);
        let inf = neuron_influence(&arch, &w, &t, class, &set).unwrap();
        for (id, c) in inf.iter() {
            let h = 1e-6;
            let up = arch.override_activation(&w, &x, id, h).unwrap().data()[class];
            let down = arch.override_activation(&w, &x, id, -h).unwrap().data()[class];
            let fd = (up - down) / (2.0 * h);
            // a kink within ±h makes the central difference meaningless
            let pre = t.pre_activation(id.layer).data()[id.index];
            if pre.abs() > 1e-4 {
                assert!((fd - c).abs() <= 1e-6 * c.abs().max(1.0), "{id:?}: fd {fd} vs {c}");
            }
        }
        assert!(inf.get(NeuronId::new(2, class)).is_none_or(|c| c == 1.0));
    }
}

#[test]
fn identical_clients_share_equally() {
    let arch = ModelArch::mlp(vec![4], &[6], 3).unwrap();
    let w = ModelWeights::uniform(&arch, 0.8, &mut seed::rng(1));
    let mut rng = seed::rng(2);
    for k in 1..=4 {
        let snap = snapshot(&arch, vec![w.clone(); k], &vec![10; k]);
        for _ in 0..5 {
            let r = trace(&snap, 0, &random_input(4, &mut rng), None, &TraceOptions::default()).unwrap();
            for v in r.normalized.values() {
                assert!((v - 1.0 / k as f64).abs() <= 1e-9);
            }
            assert_eq!(r.ranking, (0..k).collect::<Vec<_>>());
            let h = heatmap(&[r], &(0..k).collect::<Vec<_>>()).unwrap();
            assert!(h.rows[0].cells.iter().all(|c| (c - 1.0 / k as f64).abs() <= 1e-9));
        }
    }
}

#[test]
fn single_participant_takes_everything() {
    let arch = ModelArch::mlp(vec![4], &[6], 3).unwrap();
    let snap = random_snapshot(&arch, 1, 0.8, 9);
    let r = trace(&snap, 0, &[0.1, 0.2, 0.3, 0.4], None, &TraceOptions::default()).unwrap();
    assert_eq!(r.ranking, vec![0]);
    assert_eq!(r.normalized[&0], 1.0);
}

#[test]
fn degenerate_threshold() {
    let arch = ModelArch::mlp(vec![4], &[6], 3).unwrap();
    let snap = random_snapshot(&arch, 2, 0.8, 9);
    let opts = TraceOptions { threshold: 1e9, ..Default::default() };
    assert!(matches!(trace(&snap, 0, &[0.1; 4], None, &opts), Err(Error::Degenerate(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn data_size_rescaling_is_invisible(s in 0u64..10_000, factor in 2usize..50) {
        let arch = ModelArch::mlp(vec![4], &[8], 3).unwrap();
        let mut rng = seed::rng(s);
        let clients: Vec<ModelWeights> = (0..3).map(|_| ModelWeights::uniform(&arch, 0.8, &mut rng)).collect();
        let sizes = [3usize, 5, 8];
        let scaled: Vec<usize> = sizes.iter().map(|n| n * factor).collect();
        let a = snapshot(&arch, clients.clone(), &sizes);
        let b = snapshot(&arch, clients, &scaled);
        let x = random_input(4, &mut rng);
        let ra = trace(&a, 0, &x, None, &TraceOptions::default()).unwrap();
        let rb = trace(&b, 0, &x, None, &TraceOptions::default()).unwrap();
        prop_assert_eq!(ra.to_json(), rb.to_json());
    }

    #[test]
    fn report_invariants(s in 0u64..10_000, k in 1usize..5, t in 0.0f64..0.3) {
        let arch = ModelArch::mlp(vec![5], &[9, 7], 4).unwrap();
        let snap = random_snapshot(&arch, k, 0.8, s);
        let x = random_input(5, &mut seed::rng(s ^ 0xff));
        let opts = TraceOptions { threshold: t, detail: true, top_k: None };
        match trace(&snap, 3, &x, Some(1), &opts) {
            Ok(r) => {
                let total: f64 = r.normalized.values().sum();
                prop_assert!((total - 1.0).abs() <= 1e-9);
                // ranking is sorted by share and agrees with the raw argmax
                for w in r.ranking.windows(2) {
                    prop_assert!(r.normalized[&w[0]] >= r.normalized[&w[1]]);
                }
                let raw_max = r.raw.values().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(r.raw[&r.ranking[0]], raw_max);
                // only activated neurons carry detail
                let gt = arch.trace(&snap.global, &x).unwrap();
                for d in r.detail.as_ref().unwrap() {
                    prop_assert!(gt.post_activation(d.layer).data()[d.index] > t);
                }
                let oracle = oracle_report(&snap, 3, &x, t);
                prop_assert!(reports_match(&r, &oracle, 1e-9).is_ok());
            }
            Err(Error::Degenerate(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn thresholds_nest(s in 0u64..10_000, t1 in -0.5f64..0.5, dt in 0.0f64..1.0) {
        let arch = ModelArch::mlp(vec![4], &[10], 3).unwrap();
        let w = ModelWeights::uniform(&arch, 0.8, &mut seed::rng(s));
        let t = arch.trace(&w, &random_input(4, &mut seed::rng(s + 1))).unwrap();
        let loose = activated_neurons(&t, t1);
        let strict = activated_neurons(&t, t1 + dt);
        prop_assert!(strict.neurons.iter().all(|n| loose.contains(*n)));
    }
}

#[test]
fn close_helper_sanity() {
    assert!(close(1.0, 1.0 + 1e-12, 1e-9));
    assert!(!close(1.0, 1.1, 1e-9));
}

#[test]
fn trace_input_from_run_directory() {
    use neurontrace::flsim::{run_training, DatasetSpec, FlConfig, ModelSpec};
    let cfg = FlConfig::from_toml(
        r#"
        seed = 5
        rounds = 2
        num_clients = 4
        clients_per_round = 3
        batch_size = 4
        local_epochs = 1
        lr = 0.1
        alpha = 1.0
        [model]
        kind = "mlp"
        hidden = [8]
        [dataset]
        kind = "blobs"
        num_classes = 3
        per_class = 30
        test_per_class = 5
        dim = 4
        spread = 0.1
        "#,
    )
    .unwrap();
    assert!(matches!(cfg.model, ModelSpec::Mlp { .. }));
    assert!(matches!(cfg.dataset, DatasetSpec::Blobs { .. }));
    let dir = tempfile::tempdir().unwrap();
    run_training(&cfg, dir.path(), false).unwrap();
    let x = [0.3, 0.6, 0.2, 0.5];
    let a = trace_input(dir.path(), 2, 0, &x, None, &TraceOptions::default()).unwrap();
    let b = trace_input(dir.path(), 2, 0, &x, None, &TraceOptions::default()).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.ranking.len(), 3);
    let missing = trace_input(dir.path(), 9, 0, &x, None, &TraceOptions::default()).unwrap_err();
    assert!(missing.to_string().contains('9'), "{missing}");
}
