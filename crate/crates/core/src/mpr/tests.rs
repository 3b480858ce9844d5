use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::datamodel::{Item, Role};
use crate::statclasses::{target_sq_norm, DesignMatrix, FeatureView, MlpConfig};

fn item(id: String, emb: Vec<f64>, labels: &[(&str, u32)]) -> Item {
    Item::new(
        id,
        emb,
        labels
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<_, _>>(),
    )
}

fn labelled(prefix: &str, role: Role, groups: &[u32]) -> Dataset {
    let items = groups
        .iter()
        .enumerate()
        .map(|(i, &g)| item(format!("{prefix}{i}"), vec![g as f64], &[("group", g)]))
        .collect();
    Dataset::new(items, role).unwrap()
}

fn scalar(prefix: &str, role: Role, xs: &[f64]) -> Dataset {
    let items = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| item(format!("{prefix}{i}"), vec![x], &[("g", 0)]))
        .collect();
    Dataset::new(items, role).unwrap()
}

/// Random pool and curated set over a 2 x 3 label grid with 3-d embeddings.
fn random_instance(seed: u64, n: usize, m: usize) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |prefix: &str, count: usize, role: Role| {
        let items = (0..count)
            .map(|i| {
                let emb = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g = rng.random_range(0..2u32);
                let r = rng.random_range(0..3u32);
                item(format!("{prefix}{i}"), emb, &[("gender", g), ("race", r)])
            })
            .collect();
        Dataset::with_schema(
            items,
            crate::datamodel::Schema::new(
                3,
                vec![
                    crate::datamodel::LabelAxis::new("gender", 2),
                    crate::datamodel::LabelAxis::new("race", 3),
                ],
            )
            .unwrap(),
            role,
        )
        .unwrap()
    };
    let r = make("r", n, Role::Retrieval);
    let c = make("c", m, Role::Curated);
    (r, c)
}

fn random_selection(seed: u64, n: usize, k: usize) -> Selection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.random_range(0..=i));
    }
    Selection::from_indices(n, &idx[..k]).unwrap()
}

#[test]
fn tilde_a_layout() {
    let sel = Selection::from_indices(4, &[0, 2]).unwrap();
    let t = build_tilde_a(&sel, 3);
    let third = 1.0 / 3.0;
    assert_eq!(t.values, vec![0.5, 0.0, 0.5, 0.0, -third, -third, -third]);
    assert_abs_diff_eq!(t.values.iter().sum::<f64>(), 0.0, epsilon = 1e-15);
    // correlation with c = mean_R c - mean_C c
    let c = [1.0, 5.0, 3.0, 7.0, 0.0, 3.0, 6.0];
    assert_abs_diff_eq!(t.correlate(&c), 2.0 - 3.0, epsilon = 1e-12);
}

#[test]
fn fractional_tilde_a_rejects_bad_input() {
    assert!(TildeA::from_fractional(&[0.5, 0.5], 0, 2).is_err());
    assert!(TildeA::from_fractional(&[f64::NAN, 0.5], 1, 2).is_err());
    let t = TildeA::from_fractional(&[0.5, 0.5], 1, 2).unwrap();
    assert_eq!(t.values, vec![0.5, 0.5, -0.5, -0.5]);
}

#[test]
fn exact_finite_three_to_one() {
    // retrieved A, A, A, B against a balanced A/B curated set
    let r = labelled("r", Role::Retrieval, &[0, 0, 0, 1]);
    let c = labelled("c", Role::Curated, &[0, 1, 0, 1]);
    let sel = Selection::from_indices(4, &[0, 1, 2, 3]).unwrap();
    let ind = Indicator::new(vec![("group".into(), 0)]);
    let rep = mpr_exact_finite(&sel, &r, &c, &[ind]).unwrap();
    assert_abs_diff_eq!(rep.value, 0.5, epsilon = 1e-15);
    assert_eq!(rep.method, Method::ExactFinite);
}

#[test]
fn exact_finite_zero_when_proportions_match() {
    let r = labelled("r", Role::Retrieval, &[0, 1, 0, 1, 1, 1]);
    let c = labelled("c", Role::Curated, &[1, 0]);
    let sel = Selection::from_indices(6, &[0, 1]).unwrap();
    let inds = Indicator::marginals(&r.schema().union(c.schema()).unwrap());
    let rep = mpr_exact_finite(&sel, &r, &c, &inds).unwrap();
    assert_eq!(rep.value, 0.0);
}

#[test]
fn exact_finite_reports_first_maximizer() {
    let r = labelled("r", Role::Retrieval, &[0, 0]);
    let c = labelled("c", Role::Curated, &[1, 1]);
    let sel = Selection::from_indices(2, &[0, 1]).unwrap();
    let a = Indicator::new(vec![("group".into(), 0)]);
    let rep = mpr_exact_finite(&sel, &r, &c, &[a.clone(), a.negated()]).unwrap();
    assert_eq!(rep.value, 2.0);
    match rep.witness {
        Witness::Indicator { index, .. } => assert_eq!(index, 0),
        other => panic!("unexpected witness {other:?}"),
    }
}

#[test]
fn exact_finite_rejects_mismatched_selection() {
    let r = labelled("r", Role::Retrieval, &[0, 1]);
    let c = labelled("c", Role::Curated, &[0, 1]);
    let sel = Selection::from_indices(3, &[0]).unwrap();
    let ind = Indicator::new(vec![("group".into(), 0)]);
    assert!(matches!(
        mpr_exact_finite(&sel, &r, &c, std::slice::from_ref(&ind)),
        Err(Error::InvalidArgument(_))
    ));
    let sel = Selection::from_indices(2, &[0]).unwrap();
    assert!(mpr_exact_finite(&sel, &r, &c, &[]).is_err());
}

#[test]
fn finite_oracle_matches_exact_finite() {
    let (r, c) = random_instance(3, 30, 12);
    let inds = Indicator::cells(&r.schema().union(c.schema()).unwrap());
    for seed in 0..5 {
        let sel = random_selection(seed, 30, 7);
        let a = mpr_exact_finite(&sel, &r, &c, &inds).unwrap();
        let b = mpr_via_oracle(
            &sel,
            &r,
            &c,
            &OracleSpec::Finite {
                indicators: inds.clone(),
            },
        )
        .unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-12);
    }
}

#[test]
fn closed_form_scalar_example() {
    // pool {1, 2}, curated {0}; retrieving the first item
    let r = scalar("r", Role::Retrieval, &[1.0, 2.0]);
    let c = scalar("c", Role::Curated, &[0.0]);
    let sel = Selection::from_indices(2, &[0]).unwrap();
    let rep = mpr_closed_form_linear(&sel, &r, &c, FeatureView::Embedding).unwrap();
    // sqrt(1/2) * |<x, a~>| / ||x|| = sqrt(1/2) * 1 / sqrt(5)
    assert_abs_diff_eq!(rep.value, 0.316227766016838, epsilon = 1e-12);
    assert_eq!(rep.diagnostics["svd_rank"], 1);
}

/// Brute force over unit directions in the plane.
fn grid_linear_mpr(x: &[[f64; 2]], tilde: &TildeA) -> f64 {
    let steps = 200_000;
    let mut best = 0.0f64;
    for s in 0..steps {
        let th = std::f64::consts::PI * s as f64 / steps as f64;
        let w = [th.cos(), th.sin()];
        let vals: Vec<f64> = x.iter().map(|r| r[0] * w[0] + r[1] * w[1]).collect();
        let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        best = best.max(tilde.correlate(&vals).abs() / norm);
    }
    best * target_sq_norm(tilde.m, tilde.k).sqrt()
}

#[test]
fn closed_form_matches_direction_grid() {
    let pool = [[1.0, 0.3], [-0.4, 2.0], [0.7, -1.1], [2.2, 0.5], [-1.5, -0.2]];
    let cur = [[0.1, 0.9], [1.3, -0.6], [-0.8, 0.4]];
    let mk = |prefix: &str, rows: &[[f64; 2]], role| {
        let items = rows
            .iter()
            .enumerate()
            .map(|(i, v)| item(format!("{prefix}{i}"), v.to_vec(), &[("g", 0)]))
            .collect();
        Dataset::new(items, role).unwrap()
    };
    let r = mk("r", &pool, Role::Retrieval);
    let c = mk("c", &cur, Role::Curated);
    let all: Vec<[f64; 2]> = pool.iter().chain(&cur).copied().collect();
    for idx in [[0usize, 1], [1, 3], [2, 4]] {
        let sel = Selection::from_indices(5, &idx).unwrap();
        let rep = mpr_closed_form_linear(&sel, &r, &c, FeatureView::Embedding).unwrap();
        let grid = grid_linear_mpr(&all, &TildeA::from_selection(&sel, 3));
        assert_abs_diff_eq!(rep.value, grid, epsilon = 1e-6);
    }
}

#[test]
fn closed_form_weights_attain_value() {
    let (r, c) = random_instance(11, 40, 15);
    let sel = random_selection(4, 40, 10);
    let rep = mpr_closed_form_linear(&sel, &r, &c, FeatureView::Concat).unwrap();
    let Witness::LinearWeights { weights } = rep.witness else {
        panic!("expected weights");
    };
    let design = DesignMatrix::new(&r, &c, FeatureView::Concat).unwrap();
    let vals: Vec<f64> = (0..design.rows())
        .map(|i| design.row(i).iter().zip(&weights).map(|(a, b)| a * b).sum())
        .collect();
    let tilde = TildeA::from_selection(&sel, c.len());
    let sq: f64 = vals.iter().map(|v| v * v).sum();
    assert_abs_diff_eq!(sq, target_sq_norm(c.len(), sel.k()), epsilon = 1e-9);
    assert_abs_diff_eq!(tilde.correlate(&vals).abs(), rep.value, epsilon = 1e-9);
}

#[test]
fn duplicated_rows_give_zero() {
    // retrieving exactly the curated multiset leaves nothing to detect
    let r = scalar("r", Role::Retrieval, &[0.3, -1.2, 2.5, 4.0]);
    let c = scalar("c", Role::Curated, &[-1.2, 2.5, 0.3]);
    let sel = Selection::from_indices(4, &[0, 1, 2]).unwrap();
    let rep = mpr_closed_form_linear(&sel, &r, &c, FeatureView::Concat).unwrap();
    assert!(rep.value.abs() < 1e-12, "{}", rep.value);
    let rk = mpr_rkhs(&sel, &r, &c, Kernel::Gaussian { sigma: 0.7 }, FeatureView::Embedding).unwrap();
    assert!(rk.value < 1e-6, "{}", rk.value);
}

#[test]
fn linear_oracle_agrees_with_closed_form() {
    for seed in 0..8 {
        let (r, c) = random_instance(100 + seed, 35, 14);
        let sel = random_selection(seed, 35, 9);
        for view in [FeatureView::Labels, FeatureView::Embedding, FeatureView::Concat] {
            let closed = mpr_closed_form_linear(&sel, &r, &c, view).unwrap().value;
            let orc = mpr_via_oracle(&sel, &r, &c, &OracleSpec::linear(view)).unwrap().value;
            assert_abs_diff_eq!(closed, orc, epsilon = 1e-8);
        }
    }
}

/// Projection norm through a full-rank basis: the one-hot label block has
/// one redundant column per extra axis, so dropping `gender=1` leaves a
/// basis of the same column space. Normal equations by elimination.
#[allow(clippy::needless_range_loop)]
fn reduced_basis_mpr(design: &DesignMatrix, tilde: &TildeA) -> f64 {
    let cols: Vec<usize> = (0..design.x.ncols()).filter(|&j| j != 1).collect();
    let p = cols.len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (i, &ci) in cols.iter().enumerate() {
        for (j, &cj) in cols.iter().enumerate() {
            a[i][j] = (0..design.x.nrows())
                .map(|r| design.x[(r, ci)] * design.x[(r, cj)])
                .sum();
        }
        a[i][p] = (0..design.x.nrows()).map(|r| design.x[(r, ci)] * tilde.values[r]).sum();
    }
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let w: Vec<f64> = (0..p).map(|i| a[i][p] / a[i][i]).collect();
    let norm_sq: f64 = (0..design.x.nrows())
        .map(|r| {
            cols.iter()
                .zip(&w)
                .map(|(&c, wi)| design.x[(r, c)] * wi)
                .sum::<f64>()
                .powi(2)
        })
        .sum();
    target_sq_norm(tilde.m, tilde.k).sqrt() * norm_sq.sqrt()
}

#[test]
fn closed_form_handles_rank_deficient_one_hot_labels() {
    for seed in 0..12 {
        let (r, c) = random_instance(900 + seed, 120, 90);
        let sel = random_selection(seed, 120, 5 + seed as usize);
        let design = DesignMatrix::new(&r, &c, FeatureView::Labels).unwrap();
        let expected = reduced_basis_mpr(&design, &TildeA::from_selection(&sel, c.len()));
        let closed = mpr_closed_form_linear(&sel, &r, &c, FeatureView::Labels).unwrap().value;
        assert_abs_diff_eq!(closed, expected, epsilon = 1e-10);
    }
}

#[test]
fn oracle_fails_without_identifiable_statistic() {
    let r = scalar("r", Role::Retrieval, &[0.0, 0.0]);
    let c = scalar("c", Role::Curated, &[0.0]);
    let sel = Selection::from_indices(2, &[0]).unwrap();
    let err = mpr_via_oracle(&sel, &r, &c, &OracleSpec::linear(FeatureView::Embedding)).unwrap_err();
    assert!(matches!(err, Error::NoIdentifiableStatistic));
    assert!(mpr_closed_form_linear(&sel, &r, &c, FeatureView::Embedding).is_err());
}

#[test]
fn tree_oracle_dominates_normalized_cells() {
    // a full-depth tree over one-hot labels can express every single-cell
    // indicator, so its normalized value is at least that of each cell
    let (r, c) = random_instance(21, 60, 24);
    let schema = r.schema().union(c.schema()).unwrap();
    let depth: usize = schema.axes.iter().map(|a| a.cardinality as usize - 1).sum();
    let spec = OracleSpec::Tree {
        view: FeatureView::Labels,
        depth,
    };
    for seed in 0..6 {
        let sel = random_selection(seed, 60, 15);
        let tilde = TildeA::from_selection(&sel, c.len());
        let tree = mpr_via_oracle(&sel, &r, &c, &spec).unwrap().value;
        for ind in Indicator::cells(&schema) {
            let vals: Vec<f64> = r
                .items()
                .iter()
                .chain(c.items())
                .map(|it| ind.evaluate(it).unwrap())
                .collect();
            let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
            let normalized = target_sq_norm(c.len(), sel.k()).sqrt() * tilde.correlate(&vals).abs() / norm;
            assert!(tree >= normalized - 1e-9, "tree {tree} < cell {normalized}");
        }
    }
}

#[test]
fn mlp_oracle_is_bounded_and_deterministic() {
    let (r, c) = random_instance(5, 30, 10);
    let sel = random_selection(1, 30, 8);
    let spec = OracleSpec::Mlp {
        view: FeatureView::Concat,
        config: MlpConfig {
            hidden: 16,
            epochs: 200,
            ..MlpConfig::default()
        },
    };
    let a = mpr_via_oracle(&sel, &r, &c, &spec).unwrap();
    let b = mpr_via_oracle(&sel, &r, &c, &spec).unwrap();
    assert_eq!(a.value, b.value);
    assert!(a.value > 0.0 && a.value <= 1.0 + 1e-12);
}

#[test]
fn rkhs_linear_kernel_is_mean_difference() {
    let r = scalar("r", Role::Retrieval, &[1.0, 4.0, -2.0]);
    let c = scalar("c", Role::Curated, &[0.5, 1.5]);
    let sel = Selection::from_indices(3, &[0, 1]).unwrap();
    let rep = mpr_rkhs(&sel, &r, &c, Kernel::Linear, FeatureView::Embedding).unwrap();
    // |2.5 - 1.0|
    assert_abs_diff_eq!(rep.value, 1.5, epsilon = 1e-12);
}

#[test]
fn rkhs_gaussian_hand_computed() {
    let r = scalar("r", Role::Retrieval, &[0.0]);
    let c = scalar("c", Role::Curated, &[1.0]);
    let sel = Selection::from_indices(1, &[0]).unwrap();
    let rep = mpr_rkhs(&sel, &r, &c, Kernel::Gaussian { sigma: 1.0 }, FeatureView::Embedding).unwrap();
    let expected = (2.0 - 2.0 * (-0.5f64).exp()).sqrt();
    assert_abs_diff_eq!(rep.value, expected, epsilon = 1e-12);
}

#[test]
fn kernel_parsing() {
    assert_eq!("linear".parse::<Kernel>().unwrap(), Kernel::Linear);
    assert_eq!(
        "gaussian:0.5".parse::<Kernel>().unwrap(),
        Kernel::Gaussian { sigma: 0.5 }
    );
    assert!("gaussian:-1".parse::<Kernel>().is_err());
    assert!("poly".parse::<Kernel>().is_err());
}

#[test]
fn report_json_round_trip() {
    let r = labelled("r", Role::Retrieval, &[0, 0, 1]);
    let c = labelled("c", Role::Curated, &[0, 1]);
    let sel = Selection::from_indices(3, &[0, 1]).unwrap();
    let rep = mpr_exact_finite(&sel, &r, &c, &[Indicator::new(vec![("group".into(), 1)])]).unwrap();
    let back: MprReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    assert_eq!(back, rep);
}

proptest! {
    #[test]
    fn negating_an_indicator_changes_nothing(seed in 0u64..500, which in 0usize..6) {
        let (r, c) = random_instance(seed, 20, 8);
        let sel = random_selection(seed, 20, 5);
        let mut inds = Indicator::cells(&r.schema().union(c.schema()).unwrap());
        let before = mpr_exact_finite(&sel, &r, &c, &inds).unwrap().value;
        inds[which] = inds[which].negated();
        let after = mpr_exact_finite(&sel, &r, &c, &inds).unwrap().value;
        prop_assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn refining_the_class_never_lowers_mpr(seed in 0u64..500, split in 1usize..6) {
        let (r, c) = random_instance(seed, 20, 8);
        let sel = random_selection(seed, 20, 5);
        let schema = r.schema().union(c.schema()).unwrap();
        let mut inds = Indicator::cells(&schema);
        inds.extend(Indicator::marginals(&schema));
        let small = mpr_exact_finite(&sel, &r, &c, &inds[..split]).unwrap().value;
        let large = mpr_exact_finite(&sel, &r, &c, &inds).unwrap().value;
        prop_assert!(large >= small);
    }

    #[test]
    fn closed_form_lies_in_unit_interval(seed in 0u64..500, k in 1usize..15) {
        let (r, c) = random_instance(seed, 15, 6);
        let sel = random_selection(seed, 15, k);
        let v = mpr_closed_form_linear(&sel, &r, &c, FeatureView::Concat).unwrap().value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }
}
