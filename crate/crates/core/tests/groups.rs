use biasamp::data::{assign_groups, stratified_subsample, BiasConfig, Class, Example, Group, GroupConvention};

/// Two-sided normal quantile for a 1e-5 false-failure rate.
const Z: f64 = 4.4172;

fn within_binomial(count: usize, n: usize, p: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - mean).abs() <= Z * sd.max(1e-9)
}

#[test]
fn group_rates_follow_the_bias_within_binomial_bounds() {
    let n = 20_000;
    let classes: Vec<Class> = (0..2 * n).map(|i| if i % 2 == 0 { Class::Positive } else { Class::Negative }).collect();
    for convention in [GroupConvention::Inversion, GroupConvention::Mixing] {
        for (k, eps) in [0.0, 0.1, 0.25, 0.4].into_iter().enumerate() {
            let bias = BiasConfig::new(eps, convention).unwrap();
            let groups = assign_groups(&classes, &bias, 100 + k as u64).unwrap();
            let count =
                |c: Class, g: Group| classes.iter().zip(&groups).filter(|(&ci, &gi)| ci == c && gi == g).count();
            // Positives sit in group a and negatives in group b at rate 1/2 + eps.
            let pos_a = count(Class::Positive, Group::A);
            let neg_b = count(Class::Negative, Group::B);
            assert!(within_binomial(pos_a, n, 0.5 + eps), "{convention:?} eps {eps}: {pos_a}");
            assert!(within_binomial(neg_b, n, 0.5 + eps), "{convention:?} eps {eps}: {neg_b}");
        }
    }
}

#[test]
fn fully_biased_assignment_is_deterministic_by_class() {
    let classes = vec![Class::Positive, Class::Negative, Class::Negative, Class::Positive];
    let bias = BiasConfig::new(0.5, GroupConvention::Inversion).unwrap();
    let groups = assign_groups(&classes, &bias, 3).unwrap();
    assert_eq!(groups, vec![Group::A, Group::B, Group::B, Group::A]);
}

#[test]
fn assignment_is_reproducible_per_seed() {
    let classes = vec![Class::Positive; 500];
    let bias = BiasConfig::new(0.2, GroupConvention::Mixing).unwrap();
    assert_eq!(assign_groups(&classes, &bias, 9).unwrap(), assign_groups(&classes, &bias, 9).unwrap());
    assert_ne!(assign_groups(&classes, &bias, 9).unwrap(), assign_groups(&classes, &bias, 10).unwrap());
}

#[test]
fn subsample_preserves_cell_proportions() {
    let sizes = [
        (Class::Positive, Group::A, 401),
        (Class::Positive, Group::B, 99),
        (Class::Negative, Group::A, 100),
        (Class::Negative, Group::B, 400),
    ];
    let mut examples = Vec::new();
    for (class, group, n) in sizes {
        for i in 0..n {
            examples.push(Example { features: vec![i as f64], class, group });
        }
    }
    let sub = stratified_subsample(&examples, 0.25, 1).unwrap();
    for (class, group, n) in sizes {
        let kept = sub.examples.iter().filter(|e| e.class == class && e.group == group).count();
        // Round half up per cell: 100.25 -> 100, 24.75 -> 25, 25 -> 25, 100 -> 100.
        assert_eq!(kept, (n as f64 * 0.25 + 0.5).floor() as usize);
    }
    assert!(sub.warnings.is_empty());
}
