use mbnn::data::LabelledDataset;
use mbnn::network::{Network, NetworkShape};
use mbnn::objective::{
    abstraction_penalty_term, dataset_objective, objective_for_input, output_margin_term,
    sample_objective, TargetEncoding,
};
use proptest::prelude::*;

fn row_and_input(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-3.0f64..3.0, len),
        prop::collection::vec(-0.5f64..0.5, len),
    )
}

fn small_dataset(d: usize, n_classes: usize) -> impl Strategy<Value = LabelledDataset> {
    prop::collection::vec((prop::collection::vec(-2.0f64..2.0, d), 0..n_classes), 1..6).prop_map(
        move |rows| {
            let (features, labels) = rows.into_iter().unzip();
            let names = (0..n_classes).map(|c| c.to_string()).collect();
            LabelledDataset::new(features, labels, names).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn penalty_is_nonnegative_and_even((w, y) in (1usize..8).prop_flat_map(row_and_input)) {
        let p = abstraction_penalty_term(&w, &y).unwrap();
        prop_assert!(p >= 0.0);
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        prop_assert_eq!(abstraction_penalty_term(&neg, &y).unwrap(), p);
    }

    #[test]
    fn output_margin_is_scale_free((w, y) in (1usize..8).prop_flat_map(row_and_input), t in prop::sample::select(vec![0.5, -0.5])) {
        prop_assume!(mbnn::network::norm(&w) >= 1e-4);
        let base = output_margin_term(&w, &y, t).unwrap();
        for c in [2.0, 10.0, 1000.0] {
            let scaled: Vec<f64> = w.iter().map(|v| c * v).collect();
            let m = output_margin_term(&scaled, &y, t).unwrap();
            prop_assert!((m - base).abs() <= 1e-12 * base.abs().max(1.0), "{} vs {}", m, base);
        }
        prop_assert_eq!(output_margin_term(&w, &y, -t).unwrap(), -base);
    }

    #[test]
    fn dataset_objective_is_additive(
        a in small_dataset(3, 2),
        b in small_dataset(3, 2),
        seed in any::<u64>(),
        lambda in prop::sample::select(vec![0.0, 0.1, 1.0]),
    ) {
        let net = Network::init(NetworkShape::new(3, 2, 4, 2).unwrap(), seed, true);
        let ja = dataset_objective(&net, &a, lambda).unwrap();
        let jb = dataset_objective(&net, &b, lambda).unwrap();
        let jab = dataset_objective(&net, &a.concat(&b).unwrap(), lambda).unwrap();
        prop_assert!((jab - (ja + jb)).abs() <= 1e-12 * jab.abs().max(1.0));
    }
}

#[test]
fn dataset_objective_equals_sum_of_sample_objectives() {
    let net = Network::init(NetworkShape::new(2, 1, 3, 2).unwrap(), 5, true);
    let rows = vec![
        vec![0.1, 0.2],
        vec![-1.0, 0.5],
        vec![2.0, -0.3],
        vec![0.0, 0.0],
        vec![0.7, 0.7],
    ];
    let labels = vec![0, 1, 1, 0, 1];
    let data = LabelledDataset::new(rows.clone(), labels.clone(), vec!["a".into(), "b".into()]).unwrap();
    let mut brute = 0.0;
    for (x, &l) in rows.iter().zip(&labels) {
        let trace = net.forward(x).unwrap();
        let t = TargetEncoding::new(l, 2).unwrap();
        brute += sample_objective(&net, &trace, &t, 0.1).unwrap().j_t;
    }
    assert_eq!(dataset_objective(&net, &data, 0.1).unwrap(), brute);

    let one = data.subset(&[2]).unwrap();
    let t = TargetEncoding::new(1, 2).unwrap();
    assert_eq!(
        dataset_objective(&net, &one, 0.1).unwrap(),
        objective_for_input(&net, &rows[2], &t, 0.1).unwrap()
    );
    let twice = data.subset(&[2, 2]).unwrap();
    assert_eq!(
        dataset_objective(&net, &twice, 0.1).unwrap(),
        2.0 * dataset_objective(&net, &one, 0.1).unwrap()
    );
}
