mod common;

use common::{form, generalized_eigenvalues, matvec, norm, sym_norm, Mat};
use gem::classifier::{self, lbfgs, MultiLogitModel};
use gem::featmap::{FeatureLayout, FEATURES_PER_DETECTOR};
use gem::geneig::{self, Detector, SignReference};
use gem::ingest::{self, LabelColumn, LabelMap, LabeledDataset};
use gem::moments::{self, MomentStats};
use gem::pairsel;
use gem::rff::RffMap;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn to_mat(a: &DMatrix<f64>) -> Mat {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

/// `G G^T + shift I` from a flat vector of entries.
fn spd_from(entries: &[f64], d: usize, shift: f64) -> DMatrix<f64> {
    let g = DMatrix::from_row_slice(d, d, &entries[..d * d]);
    &g * g.transpose() + DMatrix::identity(d, d) * shift
}

fn spd_pair() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (1usize..=8).prop_flat_map(|d| {
        (
            prop::collection::vec(-2.0f64..2.0, d * d),
            prop::collection::vec(-2.0f64..2.0, d * d),
        )
            .prop_map(move |(a, b)| (spd_from(&a, d, 0.05), spd_from(&b, d, 0.2)))
    })
}

fn labeled_rows(max_d: usize) -> impl Strategy<Value = (usize, Vec<Vec<f64>>, Vec<usize>)> {
    (1usize..=max_d, 1usize..=40).prop_flat_map(|(d, n)| {
        (
            Just(d),
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n),
            prop::collection::vec(0usize..3, n),
        )
    })
}

fn stats_of(d: usize, rows: &[Vec<f64>], labels: &[usize]) -> MomentStats {
    let mut s = MomentStats::new(d, 3);
    for (x, &y) in rows.iter().zip(labels) {
        s.accumulate(x, y).unwrap();
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn moments_symmetric_and_psd((d, rows, labels) in labeled_rows(6), probe in prop::collection::vec(-1.0f64..1.0, 6)) {
        let s = stats_of(d, &rows, &labels);
        for c in 0..3 {
            if s.count(c) == 0 {
                continue;
            }
            let f = s.finalize(c).unwrap();
            prop_assert_eq!(&f, &f.transpose());
            let v = DVector::from_column_slice(&probe[..d]);
            let q = (v.transpose() * &f * &v)[(0, 0)];
            prop_assert!(q >= -1e-10 * f.norm() * v.norm_squared());
        }
    }

    #[test]
    fn merge_commutes_and_associates((d, rows, labels) in labeled_rows(5), cut1 in 0usize..40, cut2 in 0usize..40) {
        let n = rows.len();
        let (a, b) = (cut1.min(n), cut2.min(n));
        let (lo, hi) = (a.min(b), a.max(b));
        let s1 = stats_of(d, &rows[..lo], &labels[..lo]);
        let s2 = stats_of(d, &rows[lo..hi], &labels[lo..hi]);
        let s3 = stats_of(d, &rows[hi..], &labels[hi..]);
        let ab = s1.merge(&s2).unwrap();
        let ba = s2.merge(&s1).unwrap();
        prop_assert_eq!(ab.counts(), ba.counts());
        for c in 0..3 {
            prop_assert_eq!(ab.packed_scatter(c), ba.packed_scatter(c));
        }
        let left = ab.merge(&s3).unwrap();
        let right = s1.merge(&s2.merge(&s3).unwrap()).unwrap();
        let whole = stats_of(d, &rows, &labels);
        prop_assert_eq!(left.counts(), whole.counts());
        for c in 0..3 {
            let scale = whole.packed_scatter(c).iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for ((x, y), z) in left.packed_scatter(c).iter().zip(right.packed_scatter(c)).zip(whole.packed_scatter(c)) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
                prop_assert!((x - z).abs() <= 1e-10 * scale);
            }
        }
        prop_assert_eq!(s1.merge(&MomentStats::new(d, 3)).unwrap(), s1);
    }

    #[test]
    fn regularized_spectrum_is_lifted((d, rows, _labels) in labeled_rows(6), gamma in 0.01f64..2.0) {
        let mut s = MomentStats::new(d, 1);
        for x in &rows {
            s.accumulate(x, 0).unwrap();
        }
        let c = s.finalize(0).unwrap();
        let r = moments::regularize(&c, gamma).unwrap();
        let floor = gamma / d as f64 * c.trace();
        let min = r.clone().symmetric_eigenvalues().min();
        prop_assert!(min >= floor - 1e-10 * c.norm().max(1e-300));
    }

    #[test]
    fn solve_pair_contract((s, n) in spd_pair()) {
        let e = geneig::solve_pair(&s, &n).unwrap();
        let (sm, nm) = (to_mat(&s), to_mat(&n));
        let (ns, nn) = (sym_norm(&sm), sym_norm(&nm));
        let d = s.nrows();
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        for q in 0..d {
            let v: Vec<f64> = e.vectors.column(q).iter().copied().collect();
            let lam = e.values[q];
            let res: Vec<f64> = matvec(&sm, &v).iter().zip(matvec(&nm, &v)).map(|(a, b)| a - lam * b).collect();
            prop_assert!(norm(&res) <= 1e-8 * (ns + lam * nn));
            prop_assert!((form(&nm, &v, &v) - 1.0).abs() <= 1e-8);
            for p in 0..q {
                let u: Vec<f64> = e.vectors.column(p).iter().copied().collect();
                prop_assert!(form(&nm, &u, &v).abs() <= 1e-8);
            }
        }
        let oracle = generalized_eigenvalues(&sm, &nm);
        for (a, b) in e.values.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn swapped_pair_has_reciprocal_spectrum((s, n) in spd_pair()) {
        let a = geneig::solve_pair(&s, &n).unwrap();
        let b = geneig::solve_pair(&n, &s).unwrap();
        let d = a.values.len();
        for q in 0..d {
            let prod = a.values[q] * b.values[d - 1 - q];
            prop_assert!((prod - 1.0).abs() <= 1e-8, "{}", prod);
        }
    }

    #[test]
    fn scaling_numerator_scales_eigenvalues((s, n) in spd_pair(), c in 0.1f64..10.0) {
        let a = geneig::solve_pair(&s, &n).unwrap();
        let b = geneig::solve_pair(&(&s * c), &n).unwrap();
        for q in 0..a.values.len() {
            prop_assert!((b.values[q] - c * a.values[q]).abs() <= 1e-8 * (c * a.values[q]).max(1.0));
            // Directions agree when the eigenvalue is isolated.
            let isolated = (0..a.values.len()).filter(|&p| p != q).all(|p| (a.values[p] - a.values[q]).abs() > 1e-3 * a.values[q].abs().max(1.0));
            if isolated {
                let cos = a.vectors.column(q).dot(&b.vectors.column(q)).abs() / (a.vectors.column(q).norm() * b.vectors.column(q).norm());
                prop_assert!((cos - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn select_respects_threshold_and_cap((s, n) in spd_pair(), theta in 0.0f64..3.0, m_max in 1usize..5) {
        let e = geneig::solve_pair(&s, &n).unwrap().with_pair(0, 1);
        let dets = geneig::select_detectors(&e, theta, m_max, None).unwrap();
        let above = e.values.iter().filter(|&&l| l >= theta).count();
        prop_assert_eq!(dets.len(), above.min(m_max));
        for (q, det) in dets.iter().enumerate() {
            prop_assert!(det.eigenvalue >= theta);
            prop_assert_eq!(det.rank, q);
        }
    }

    #[test]
    fn expansion_nonnegative_sparse_homogeneous(
        vecs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..5),
        x in prop::collection::vec(-3.0f64..3.0, 4),
        c in 0.1f64..10.0,
    ) {
        let dets: Vec<Detector> = vecs
            .into_iter()
            .enumerate()
            .map(|(q, vector)| Detector { vector, eigenvalue: 1.5, numerator: 0, denominator: 1, rank: q })
            .collect();
        let layout = FeatureLayout::new(4, dets, false).unwrap();
        let out = layout.expand(&x).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
        let scaled = layout.expand(&xs).unwrap();
        for (r, block) in out.chunks(FEATURES_PER_DETECTOR).enumerate() {
            prop_assert!(block.iter().all(|&v| v >= 0.0));
            prop_assert!(block.iter().filter(|&&v| v != 0.0).count() <= 3);
            for a in 0..FEATURES_PER_DETECTOR {
                let alpha = (a % 3 + 1) as f64;
                let want = block[a] * c.powf(alpha / 2.0);
                let got = scaled[FEATURES_PER_DETECTOR * r + a];
                prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn probabilities_normalized_and_shift_invariant(
        w in prop::collection::vec(-3.0f64..3.0, 12),
        x in prop::collection::vec(-3.0f64..3.0, 3),
        shift in -50.0f64..50.0,
    ) {
        let mut m = MultiLogitModel::zeros(3, 3);
        m.weights.copy_from_slice(&w);
        let p = m.predict_proba(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        let mut shifted = m.clone();
        for c in 0..3 {
            shifted.weights[c * 4 + 3] += shift;
        }
        let q = shifted.predict_proba(&x).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn geomean_order_invariant_and_idempotent(raw in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..6), perm_seed in 0u64..1000) {
        let members: Vec<Vec<f64>> = raw
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum::<f64>() + 1e-9;
                r.iter().map(|v| v / s).collect()
            })
            .collect();
        let refs: Vec<&[f64]> = members.iter().map(Vec::as_slice).collect();
        let g = classifier::ensemble_geomean(&refs).unwrap();
        prop_assert!((g.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let mut shuffled = refs.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut common::rng(perm_seed));
        prop_assert_eq!(classifier::ensemble_geomean(&shuffled).unwrap(), g.clone());
        let doubled: Vec<&[f64]> = refs.iter().chain(refs.iter()).copied().collect();
        let h = classifier::ensemble_geomean(&doubled).unwrap();
        for (a, b) in g.iter().zip(&h) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn strictly_convex_objective_has_one_minimum(
        xs in prop::collection::vec(-2.0f64..2.0, 24),
        start in prop::collection::vec(-3.0f64..3.0, 12),
    ) {
        let x = DMatrix::from_row_slice(8, 3, &xs);
        let labels: Vec<usize> = (0..8).map(|i| i % 3).collect();
        let opts = classifier::TrainOptions::default();
        let (a, ra) = classifier::train(&x, &labels, 3, 0.1, &opts).unwrap();
        let init = classifier::TrainOptions { init: Some(start), ..Default::default() };
        let (b, rb) = classifier::train(&x, &labels, 3, 0.1, &init).unwrap();
        prop_assert!((a.objective - b.objective).abs() <= 1e-6);
        prop_assert!(ra.history.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(rb.history.windows(2).all(|w| w[1] < w[0]));
        prop_assert_eq!(ra.termination, lbfgs::Termination::GradientTolerance);
    }

    #[test]
    fn pair_plans_well_formed(k in 2usize..24, seed in 0u64..1000, frac in 0.0f64..1.0) {
        let total = k * (k - 1);
        let count = 1 + ((total - 1) as f64 * frac) as usize;
        let plans = [
            pairsel::all_pairs(k).unwrap(),
            pairsel::hypercube_pairs(k, seed).unwrap(),
            pairsel::random_pairs(k, count, seed, false).unwrap(),
            pairsel::random_pairs(k, count, seed, true).unwrap(),
        ];
        for plan in &plans {
            let mut sorted = plan.pairs.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), plan.len());
            prop_assert!(plan.pairs.iter().all(|&(i, j)| i < k && j < k && i != j));
        }
        prop_assert_eq!(plans[2].len(), count);
        prop_assert_eq!(plans[3].len(), count);
        let cube = &plans[1];
        prop_assert!(cube.pairs.iter().all(|&(i, j)| cube.pairs.contains(&(j, i))));
        prop_assert_eq!(cube.classes().len(), k);
        if k.is_power_of_two() {
            prop_assert_eq!(cube.len(), k * k.trailing_zeros() as usize);
        }
        for side in 0..2 {
            let mut counts = vec![0usize; k];
            for p in &plans[3].pairs {
                counts[if side == 0 { p.0 } else { p.1 }] += 1;
            }
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(pairsel::hypercube_pairs(k, seed).unwrap(), plans[1].clone());
        prop_assert_eq!(pairsel::random_pairs(k, count, seed, true).unwrap(), plans[3].clone());
    }

    #[test]
    fn rff_features_bounded(x in prop::collection::vec(-10.0f64..10.0, 3), features in 1usize..64, seed in 0u64..100) {
        let m = RffMap::sample(3, features, 0.7, seed).unwrap();
        let z = m.apply(&x).unwrap();
        let bound = (2.0 / features as f64).sqrt();
        prop_assert!(z.iter().all(|v| v.abs() <= bound + 1e-15));
    }

    #[test]
    fn text_formats_round_trip((d, rows, labels) in labeled_rows(5)) {
        let data = LabeledDataset::from_rows(&rows, labels, 3).unwrap();
        let mut csv = Vec::new();
        ingest::write_csv(&data, &mut csv).unwrap();
        let back = ingest::read_csv(&csv[..], LabelColumn::First, Some(data.label_map())).unwrap();
        prop_assert_eq!(back.labels(), data.labels());
        prop_assert_eq!(back.to_dense_values(), data.to_dense_values());

        let mut svm = Vec::new();
        ingest::write_libsvm(&data, &mut svm).unwrap();
        let back = ingest::read_libsvm(&svm[..], Some(data.label_map())).unwrap().with_dim(d).unwrap();
        prop_assert_eq!(back.labels(), data.labels());
        prop_assert_eq!(back.to_dense_values(), data.to_dense_values());
    }

    #[test]
    fn splits_partition_deterministically(n in 1usize..300, seed in 0u64..50, a in 0.05f64..0.9) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let data = LabeledDataset::from_rows(&rows, vec![0; n], 1).unwrap();
        let parts = ingest::split(&data, &[a, 1.0 - a], seed).unwrap();
        prop_assert_eq!(parts[0].len() + parts[1].len(), n);
        let mut seen: Vec<f64> = parts.iter().flat_map(|p| p.to_dense_values()).collect();
        seen.sort_by(f64::total_cmp);
        prop_assert_eq!(seen, (0..n).map(|i| i as f64).collect::<Vec<_>>());
        prop_assert_eq!(ingest::split(&data, &[a, 1.0 - a], seed).unwrap(), parts);
    }
}

/// Sign reference from explicit rows (the pipeline uses an equivalent
/// private implementation).
struct Rows<'a>(&'a [Vec<f64>]);

impl SignReference for Rows<'_> {
    fn mean_projection(&self, v: &[f64]) -> (f64, f64) {
        let n = self.0.len() as f64;
        let m: f64 = self.0.iter().map(|x| common::dot(x, v)).sum::<f64>() / n;
        (m, 1e-12 * self.0.iter().map(|x| common::dot(x, v).abs()).sum::<f64>() / n)
    }
    fn cubic_projection(&self, v: &[f64]) -> f64 {
        self.0.iter().map(|x| common::dot(x, v).powi(3)).sum::<f64>() / self.0.len() as f64
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// Replacing every x by A x leaves canonical detector projections
    /// unchanged at gamma = 0.
    #[test]
    fn projections_invariant_under_linear_maps(seed in 0u64..10_000) {
        let d = 4;
        let classes = gem::synth::random_gaussian_classes(d, 2, 0.7, seed);
        let data = gem::synth::gaussian_mixture(&classes, 600, seed + 1).unwrap();
        let a = gem::synth::random_transform(d, 100.0, seed + 2);
        let moved = gem::synth::transform_dataset(&data, &a).unwrap();
        let detectors = |ds: &LabeledDataset| {
            let mut s = MomentStats::new(d, 2);
            s.accumulate_dataset(ds).unwrap();
            let e = geneig::solve_pair(&s.finalize(0).unwrap(), &s.finalize(1).unwrap()).unwrap().with_pair(0, 1);
            let rows: Vec<Vec<f64>> = ds.rows().filter(|(_, y)| *y == 0).map(|(r, _)| r.to_dense(d)).collect();
            (e.values.clone(), geneig::select_detectors(&e, 0.0, d, Some(&Rows(&rows))).unwrap())
        };
        let (vals, before) = detectors(&data);
        let (_, after) = detectors(&moved);
        for q in 0..d {
            let gap = (0..d).filter(|&p| p != q).map(|p| (vals[p] - vals[q]).abs() / vals[q].abs()).fold(f64::INFINITY, f64::min);
            if gap < 1e-3 {
                continue;
            }
            for i in 0..data.len() {
                let x = data.row(i).to_dense(d);
                let ax = moved.row(i).to_dense(d);
                let p0 = before[q].project(&x);
                let p1 = after[q].project(&ax);
                prop_assert!((p0 - p1).abs() <= 1e-6 * p0.abs().max(1.0), "q={} {} vs {}", q, p0, p1);
            }
        }
    }
}

#[test]
fn label_map_is_kept_through_round_trip() {
    let map = LabelMap::new(vec!["cat".into(), "dog".into()]);
    let data = LabeledDataset::from_dense(1, vec![0.5, 1.5], vec![1, 0], map).unwrap();
    let mut csv = Vec::new();
    ingest::write_csv(&data, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv.clone()).unwrap(), "dog,0.5\ncat,1.5\n");
    let back = ingest::read_csv(&csv[..], LabelColumn::First, None).unwrap();
    assert_eq!(back.label_map().names(), &["cat", "dog"]);
    assert_eq!(back.labels(), &[1, 0]);
}
