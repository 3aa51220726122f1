use structsynth::dataset::{Attribute, AttributeKind, Cell, Dataset, Schema, Task};
use structsynth::evaluation::{downstream_utility, UtilityMetric};

fn schema() -> Schema {
    Schema::new(
        vec![
            Attribute::new("age", AttributeKind::Numerical),
            Attribute::new("job", AttributeKind::Categorical),
            Attribute::new("hours", AttributeKind::Numerical),
            Attribute::new("income", AttributeKind::Categorical),
        ],
        Some("income".into()),
        Task::BinaryClassification,
    )
    .unwrap()
}

/// Deterministic 40-row toy task with overlapping classes.
fn toy(offset: usize, n: usize) -> Dataset {
    let jobs = ["clerk", "nurse", "smith"];
    let rows = (offset..offset + n)
        .map(|i| {
            let age = 20.0 + ((i * 37) % 45) as f64;
            let hours = 10.0 + ((i * 13) % 50) as f64;
            let job = jobs[(i * 7) % 3];
            let score = 0.04 * age + 0.05 * hours + if job == "nurse" { 0.8 } else { 0.0 } + ((i * 5) % 7) as f64 * 0.3;
            let income = if score > 5.2 { ">50K" } else { "<=50K" };
            vec![Cell::Number(age), Cell::Category(job.into()), Cell::Number(hours), Cell::Category(income.into())]
        })
        .collect();
    Dataset::new(schema(), rows).unwrap()
}

/// Independent logistic regression: same features, step rule, penalty and
/// iteration count, written against plain vectors.
fn oracle_auc(train: &Dataset, test: &Dataset) -> f64 {
    let jobs = ["clerk", "nurse", "smith"];
    let stats = |col: usize| {
        let v: Vec<f64> = train.rows().iter().map(|r| r[col].as_number().unwrap()).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        (m, sd)
    };
    let (ma, sa) = stats(0);
    let (mh, sh) = stats(2);
    let features = |r: &Vec<Cell>| -> Vec<f64> {
        let mut f = vec![(r[0].as_number().unwrap() - ma) / sa];
        let job = r[1].as_category().unwrap();
        f.extend(jobs.iter().map(|j| if *j == job { 1.0 } else { 0.0 }));
        f.push((r[2].as_number().unwrap() - mh) / sh);
        f
    };
    let x: Vec<Vec<f64>> = train.rows().iter().map(features).collect();
    let y: Vec<f64> = train.rows().iter().map(|r| if r[3].as_category() == Some(">50K") { 1.0 } else { 0.0 }).collect();
    let n = x.len() as f64;
    let l2 = 1e-4;
    let lipschitz = 0.25 * x.iter().map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n + l2;
    let lr = 1.0 / lipschitz;
    let mut w = vec![0.0; 5];
    let mut b = 0.0;
    for _ in 0..1000 {
        let mut gw = vec![0.0; 5];
        let mut gb = 0.0;
        for (xi, yi) in x.iter().zip(&y) {
            let z: f64 = w.iter().zip(xi).map(|(a, c)| a * c).sum::<f64>() + b;
            let err = 1.0 / (1.0 + (-z).exp()) - yi;
            for k in 0..5 {
                gw[k] += err * xi[k];
            }
            gb += err;
        }
        for k in 0..5 {
            w[k] -= lr * (gw[k] / n + l2 * w[k]);
        }
        b -= lr * gb / n;
    }
    let scores: Vec<f64> = test
        .rows()
        .iter()
        .map(|r| {
            let f = features(r);
            1.0 / (1.0 + (-(w.iter().zip(&f).map(|(a, c)| a * c).sum::<f64>() + b)).exp())
        })
        .collect();
    let pos: Vec<f64> = test
        .rows()
        .iter()
        .zip(&scores)
        .filter(|(r, _)| r[3].as_category() == Some(">50K"))
        .map(|(_, s)| *s)
        .collect();
    let neg: Vec<f64> = test
        .rows()
        .iter()
        .zip(&scores)
        .filter(|(r, _)| r[3].as_category() != Some(">50K"))
        .map(|(_, s)| *s)
        .collect();
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            wins += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[test]
fn matches_independent_implementation() {
    let train = toy(0, 40);
    let test = toy(40, 30);
    let empty = Dataset::empty(schema());
    let got = downstream_utility(&train, &empty, &test, None).unwrap();
    assert_eq!(got.metric, UtilityMetric::Auc);
    let want = oracle_auc(&train, &test);
    assert!((got.value - want).abs() < 1e-6, "{} vs {want}", got.value);
}

#[test]
fn empty_synth_equals_train_alone() {
    let train = toy(0, 40);
    let test = toy(40, 30);
    let a = downstream_utility(&train, &Dataset::empty(schema()), &test, None).unwrap();
    let b = downstream_utility(&train, &Dataset::empty(schema()), &test, Some(Task::BinaryClassification)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn copying_a_separable_test_set_reaches_one() {
    let s = Schema::new(
        vec![Attribute::new("x", AttributeKind::Numerical), Attribute::new("y", AttributeKind::Categorical)],
        Some("y".into()),
        Task::BinaryClassification,
    )
    .unwrap();
    let make = |xs: &[f64]| {
        Dataset::new(
            s.clone(),
            xs.iter().map(|&x| vec![Cell::Number(x), Cell::Category(if x > 0.0 { "p" } else { "n" }.into())]).collect(),
        )
        .unwrap()
    };
    let train = make(&[-3.0, -1.0, 2.0, 4.0]);
    let test = make(&[-2.5, -0.5, 0.7, 3.3, -4.0, 1.5]);
    let u = downstream_utility(&train, &test, &test, None).unwrap();
    assert_eq!(u.value, 1.0);
}

#[test]
fn regression_uses_r_squared() {
    let s = Schema::new(
        vec![Attribute::new("x", AttributeKind::Numerical), Attribute::new("y", AttributeKind::Numerical)],
        Some("y".into()),
        Task::None,
    )
    .unwrap();
    let d = |r: std::ops::Range<i32>| {
        Dataset::new(s.clone(), r.map(|i| vec![Cell::Number(i as f64), Cell::Number(3.0 * i as f64 - 1.0)]).collect()).unwrap()
    };
    let u = downstream_utility(&d(0..30), &Dataset::empty(s.clone()), &d(30..40), None).unwrap();
    assert_eq!(u.metric, UtilityMetric::R2);
    assert!(u.value > 0.99, "{}", u.value);
}
