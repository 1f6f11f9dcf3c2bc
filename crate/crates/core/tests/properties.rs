//! Property tests for invariants that hold on every input.

use dtrlab::direct::value::{Estimator, ValueCache, ZeroAugmentation};
use dtrlab::direct::threshold_candidates;
use dtrlab::fit::MethodTag;
use dtrlab::indirect::{blip_to_regret, regret_to_blip};
use dtrlab::io::{read_wide, write_wide};
use dtrlab::pipeline::{fit_method, FitConfig};
use dtrlab::propensity::{PropensityFits, PropensityModel};
use dtrlab::simlab::dgp::Simulator;
use dtrlab::simlab::{decision_accuracy, generate_case1, generate_case2, regret_audit, Case1, Case2};
use dtrlab::stats::{ols_fit, DesignMatrix};
use dtrlab::{Dataset, FeatureMap, Rule, Schema, StageRecord, Trajectory};
use proptest::prelude::*;

fn shifted(data: &Dataset, c: f64) -> Dataset {
    let trajs = data
        .trajectories()
        .iter()
        .map(|t| Trajectory::new(t.stages().to_vec(), t.outcome() + c).unwrap())
        .collect();
    Dataset::new(data.schema().clone(), trajs).unwrap()
}

/// Two stages, stage 2 optional.
fn toy_dataset() -> impl Strategy<Value = Dataset> {
    let row = (
        -1e6f64..1e6,
        any::<bool>(),
        proptest::option::of((-1e3f64..1e3, any::<bool>())),
        -1e9f64..1e9,
    );
    proptest::collection::vec(row, 1..30).prop_map(|rows| {
        let schema = Schema::new(vec![vec!["L1".into()], vec!["L2".into()]]).unwrap();
        let trajs = rows
            .into_iter()
            .map(|(l1, a1, s2, y)| {
                let mut recs = vec![StageRecord::new(vec![l1], u8::from(a1))];
                if let Some((l2, a2)) = s2 {
                    recs.push(StageRecord::new(vec![l2], u8::from(a2)));
                }
                Trajectory::new(recs, y).unwrap()
            })
            .collect();
        Dataset::new(schema, trajs).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wide_csv_round_trips(data in toy_dataset()) {
        let text = write_wide(&data).unwrap();
        prop_assert_eq!(read_wide(&text).unwrap(), data);
    }

    #[test]
    fn ols_residuals_are_orthogonal(
        rows in proptest::collection::vec((-10f64..10.0, -10f64..10.0, -100f64..100.0), 5..40)
    ) {
        let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![1.0, r.0, r.1]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let design = DesignMatrix::unlabeled(&x).unwrap();
        if let Ok(fit) = ols_fit(&design, &y, None) {
            let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            for v in design.tr_mul_vec(&fit.residuals) {
                prop_assert!(v.abs() <= 1e-8 * ynorm, "{v}");
            }
        }
    }

    #[test]
    fn linear_sign_ignores_positive_scaling(
        psi in proptest::collection::vec(-1e3f64..1e3, 2),
        scale in 1e-3f64..1e3,
        l1 in -1e3f64..1e3,
    ) {
        let schema = Schema::new(vec![vec!["L1".into()]]).unwrap();
        let fm = FeatureMap::parse("1,L1", 1, &schema).unwrap();
        let t = Trajectory::new(vec![StageRecord::new(vec![l1], 0)], 0.0).unwrap();
        let h = t.history(1).unwrap();
        let base = Rule::linear_sign(fm.clone(), psi.clone()).unwrap();
        let scaled = Rule::linear_sign(fm, psi.iter().map(|p| p * scale).collect()).unwrap();
        // away from the boundary the sign of the score decides
        prop_assume!(base.score(&h).abs() > 1e-9 * (1.0 + psi[0].abs() + (psi[1] * l1).abs()));
        prop_assert_eq!(base.action(&h), scaled.action(&h));
    }

    #[test]
    fn blip_regret_round_trip(g1 in -1e6f64..1e6) {
        let mu = blip_to_regret(&[0.0, g1]);
        prop_assert!(mu.iter().all(|m| *m >= 0.0));
        prop_assert!(mu.contains(&0.0));
        let back = regret_to_blip(&mu);
        prop_assert!((back[1] - g1).abs() <= 1e-9 * (1.0 + g1.abs()));
    }

    #[test]
    fn zero_augmentation_is_ipwe(data in toy_dataset(), p1 in 0.05f64..0.95, p2 in 0.05f64..0.95, t1 in -1e6f64..1e6) {
        let props = PropensityFits { models: vec![PropensityModel::constant(1, p1), PropensityModel::constant(2, p2)] };
        let cache = ValueCache::new(&data, &props, Some(&ZeroAugmentation)).unwrap();
        let decide = |i: usize, j: usize| u8::from(data.get(i).covariates(j)[0] < if j == 1 { t1 } else { 0.0 });
        let a = cache.evaluate(Estimator::Aipwe, decide);
        let b = cache.evaluate(Estimator::Ipwe, decide);
        prop_assert!((a.value - b.value).abs() <= 1e-12 * (1.0 + b.value.abs()));
    }

    #[test]
    fn threshold_candidates_cover_every_split(values in proptest::collection::vec(-1e4f64..1e4, 1..35)) {
        let c = threshold_candidates(&values);
        prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
        let mut distinct = values.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        // with few distinct values every partition point is present
        prop_assert_eq!(c.len(), distinct.len() + 1);
        prop_assert!(c[0] < distinct[0] && c[c.len() - 1] > distinct[distinct.len() - 1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn regrets_vanish_at_the_oracle(seed in any::<u64>()) {
        prop_assert!(regret_audit(&Case1::default(), &generate_case1(300, seed).unwrap()).is_ok());
        prop_assert!(regret_audit(&Case2::default(), &generate_case2(300, seed).unwrap()).is_ok());
    }

    #[test]
    fn a_learning_values_never_increase(seed in any::<u64>()) {
        let data = generate_case1(400, seed).unwrap();
        for m in [MethodTag::A1, MethodTag::A3, MethodTag::A4, MethodTag::Dwols] {
            let Ok(out) = fit_method(m, &data, &FitConfig::case1()) else { continue };
            let fit = out.fit.unwrap();
            let y = data.outcomes();
            for i in 0..data.len() {
                prop_assert!(fit.value_columns[0][i] >= fit.value_columns[1][i]);
                prop_assert!(fit.value_columns[1][i] >= y[i]);
            }
        }
    }

    // A2 has no intercept column, so a shift does move its ψ; only fits
    // whose design carries an intercept are covered.
    #[test]
    fn outcome_shift_moves_only_intercepts(seed in any::<u64>(), c in -1e4f64..1e4) {
        let data = generate_case1(400, seed).unwrap();
        let moved = shifted(&data, c);
        for m in [MethodTag::A4, MethodTag::Dwols] {
            let (Ok(a), Ok(b)) = (fit_method(m, &data, &FitConfig::case1()), fit_method(m, &moved, &FitConfig::case1())) else { continue };
            let (pa, pb) = (a.fit.unwrap().psi(), b.fit.unwrap().psi());
            for (x, y) in pa.iter().zip(&pb) {
                prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()), "{m}: {pa:?} vs {pb:?}");
            }
        }
    }

    #[test]
    fn oracle_agrees_with_itself(seed in any::<u64>()) {
        let sim = Case2::default();
        let oracle = sim.oracle().unwrap();
        let test = generate_case2(200, seed).unwrap();
        let acc = decision_accuracy(&oracle, &oracle, &test).unwrap();
        prop_assert_eq!(acc.overall, 1.0);
    }
}
