//! Confidence intervals checked against an independent Student-t
//! implementation.

use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::Statistics;

use tabaug_core::eval::{confidence_interval, t_quantile};

#[test]
fn quantiles_match_reference_distribution() {
    for df in [1.0, 2.0, 3.0, 5.0, 9.0, 29.0, 99.0, 999.0] {
        for p in [0.6, 0.9, 0.95, 0.975, 0.995] {
            let want = StudentsT::new(0.0, 1.0, df).unwrap().inverse_cdf(p);
            let got = t_quantile(p, df);
            assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "df {df} p {p}: {got} vs {want}");
        }
    }
}

proptest! {
    #[test]
    fn half_width_matches_reference(values in prop::collection::vec(0.0..1.0f64, 2..200)) {
        let (mean, half) = confidence_interval(&values).unwrap();
        let n = values.len() as f64;
        let t = StudentsT::new(0.0, 1.0, n - 1.0).unwrap().inverse_cdf(0.975);
        let want = t * values.as_slice().std_dev() / n.sqrt();
        prop_assert!((mean - values.as_slice().mean()).abs() < 1e-12);
        prop_assert!((half - want).abs() <= 1e-6 * want.max(1e-12));
    }
}

#[test]
fn single_value_has_no_interval() {
    assert!(confidence_interval(&[0.5]).is_err());
}
