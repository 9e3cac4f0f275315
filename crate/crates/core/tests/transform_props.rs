use mra_core::transform::attribution::{
    as_density, as_numeric, as_summable, partial, DensityInput, DensityModel, MetricModel, SummableModel,
    DEFAULT_POINTS, DENSITY_REGION_OWNED,
};
use mra_core::transform::basic::Support;
use mra_core::transform::correlation::cross_rank_corr;
use mra_core::{relation, SliceTransformation, Tuple, Value, ValueType};
use mra_testkit::gen::random_density_input;
use mra_testkit::oracle::{cross_rank_pairs, ratio_path_integral};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn worked_example() -> DensityInput {
    DensityInput {
        w_c: 100.0,
        s_c: 20.0,
        w_t: 120.0,
        s_t: 30.0,
        w_c_region: 40.0,
        s_c_region: 10.0,
        w_t_region: 50.0,
        s_t_region: 20.0,
    }
}

#[test]
fn worked_density_example() {
    let x = worked_example();
    assert_eq!(x.c_gamma(), -100.0);
    assert_eq!(x.delta(), -1.0);
    let closed = as_density(&x).unwrap();
    assert!((closed - -1.405465).abs() < 1e-5, "{closed}");
    let (p0, p1) = x.endpoints();
    let oracle = ratio_path_integral(p0, p1, 200_000);
    assert!((closed - oracle).abs() < 1e-9, "{closed} vs {oracle}");
    let numeric = as_numeric(&DensityModel, &p0, &p1, &DENSITY_REGION_OWNED, DEFAULT_POINTS).unwrap();
    assert!((closed - numeric).abs() < 1e-6);
}

fn split(x: &DensityInput, f: [f64; 4]) -> (DensityInput, DensityInput) {
    let a = DensityInput {
        w_t_region: x.w_t_region * f[0],
        w_c_region: x.w_c_region * f[1],
        s_t_region: x.s_t_region * f[2],
        s_c_region: x.s_c_region * f[3],
        ..*x
    };
    let b = DensityInput {
        w_t_region: x.w_t_region - a.w_t_region,
        w_c_region: x.w_c_region - a.w_c_region,
        s_t_region: x.s_t_region - a.s_t_region,
        s_c_region: x.s_c_region - a.s_c_region,
        ..*x
    };
    (a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn density_completeness_and_additivity(seed in any::<u64>(), f in prop::array::uniform4(0.0f64..1.0)) {
        let x = random_density_input(&mut rng(seed));
        let whole = as_density(&x.population()).unwrap();
        prop_assert!((whole - x.delta()).abs() <= 1e-9);
        let (a, b) = split(&x, f);
        let sum = as_density(&a).unwrap() + as_density(&b).unwrap();
        prop_assert!((as_density(&x).unwrap() - sum).abs() <= 1e-9);
    }

    #[test]
    fn summable_completeness_and_additivity(t in 0.0f64..1e4, c in 0.0f64..1e4, ft in 0.0f64..1.0, fc in 0.0f64..1.0) {
        prop_assert!((as_summable(t, c) - (t - c)).abs() <= 1e-9);
        let (ta, ca) = (t * ft, c * fc);
        prop_assert!((as_summable(t, c) - (as_summable(ta, ca) + as_summable(t - ta, c - ca))).abs() <= 1e-9);
        let num = as_numeric(&SummableModel, &[c, 1e4 - c], &[t, 2e4 - t], &[0], DEFAULT_POINTS).unwrap();
        prop_assert!((num - (t - c)).abs() <= 1e-12);
    }

    #[test]
    fn density_closed_form_matches_quadrature(seed in any::<u64>()) {
        let x = random_density_input(&mut rng(seed));
        let (p0, p1) = x.endpoints();
        let closed = as_density(&x).unwrap();
        let numeric = as_numeric(&DensityModel, &p0, &p1, &DENSITY_REGION_OWNED, DEFAULT_POINTS).unwrap();
        prop_assert!((closed - numeric).abs() <= 1e-6, "{} vs {}", closed, numeric);
        let oracle = ratio_path_integral(p0, p1, 20_000);
        prop_assert!((closed - oracle).abs() <= 1e-6 * (1.0 + closed.abs()));
    }

    #[test]
    fn finite_differences_match_analytic(z in prop::array::uniform4(1.0f64..1000.0)) {
        let exact = DensityModel::analytic_gradient(&z);
        for (i, e) in exact.iter().enumerate() {
            let fd = partial(&DensityModel, &z, i).unwrap();
            prop_assert!((fd - e).abs() <= 1e-5 * e.abs().max(1e-12), "d{}: {} vs {}", i, fd, e);
        }
        prop_assert!(DensityModel.gradient(&z).is_none());
    }

    #[test]
    fn cross_rank_matches_enumeration(
        u in prop::collection::vec((0i32..6, 0i32..6), 1..20),
        v in prop::collection::vec((0i32..6, 0i32..6), 1..20),
    ) {
        let f = |p: &Vec<(i32, i32)>| p.iter().map(|&(b, r)| (b as f64, r as f64)).collect::<Vec<_>>();
        let (u, v) = (f(&u), f(&v));
        let got = cross_rank_corr(&u, &v).unwrap();
        prop_assert!((got - cross_rank_pairs(&u, &v)).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&got));
        let neg = |p: &[(f64, f64)]| p.iter().map(|&(b, r)| (b, -r)).collect::<Vec<_>>();
        prop_assert!((cross_rank_corr(&neg(&u), &neg(&v)).unwrap() + got).abs() <= 1e-12);
        let mono = |p: &[(f64, f64)]| p.iter().map(|&(b, r)| (b.powi(3) + 2.0 * b, r)).collect::<Vec<_>>();
        prop_assert!((cross_rank_corr(&mono(&u), &mono(&v)).unwrap() - got).abs() <= 1e-12);
    }

    #[test]
    fn support_is_a_fraction(count in 0i64..1000, extra in 0i64..1000) {
        let reference = count + extra;
        prop_assume!(reference > 0);
        let c = |n: i64| relation([("Count", ValueType::Int)], [vec![Value::Int(n)]]);
        let out = Support::default().apply(&Tuple::new(), &c(count), Some(&c(reference))).unwrap();
        let s = out.rows().next().unwrap()[0].as_f64().unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
    }
}

#[test]
fn figure_configuration_is_perfectly_correlated() {
    let u = [(3.0, 3.0), (4.0, 2.0)];
    let v = [(1.0, 1.0), (2.0, 0.0)];
    assert_eq!(cross_rank_pairs(&u, &v), 1.0);
    assert_eq!(cross_rank_corr(&u, &v).unwrap(), 1.0);
}

#[test]
fn identical_points_are_uncorrelated() {
    let p = [(2.0, 2.0); 3];
    assert_eq!(cross_rank_corr(&p, &p).unwrap(), 0.0);
}
