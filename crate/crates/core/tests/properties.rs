use proptest::prelude::*;

use ntn_core::energy::{self, efficient_speeds};
use ntn_core::evaluation::fmt_num;
use ntn_core::linalg::{CMatrix, CVector, C64};
use ntn_core::linkmodel;
use ntn_core::robustify::{exact_gain, quad_surrogate};
use ntn_core::ScenarioConfig;

fn hermitian(m: usize) -> impl Strategy<Value = (CMatrix, CVector)> {
    (
        prop::collection::vec(-1.0..1.0f64, 2 * m * m),
        prop::collection::vec((0.5..1.5f64, -3.1..3.1f64), m),
    )
        .prop_map(move |(a, g)| {
            let a = CMatrix::from_fn(m, m, |i, j| C64::new(a[2 * (i * m + j)], a[2 * (i * m + j) + 1]));
            let g = CVector::from_iterator(m, g.into_iter().map(|(r, p)| C64::from_polar(r, p)));
            (&a * a.adjoint(), g)
        })
}

proptest! {
    #[test]
    fn propulsion_never_below_its_minimum(v in 0.0..30.0f64) {
        let cfg = ScenarioConfig::default();
        let pc = cfg.propulsion();
        let best = efficient_speeds(&pc, cfg.v_max, 1e-3);
        prop_assert!(energy::propulsion_power(v, &pc) >= best.min_power - 1e-9);
    }

    #[test]
    fn path_loss_decreases_with_distance(d in 1.0..1e7f64, f in 1e8..1e11f64) {
        let near = linkmodel::free_space_loss(d, f).unwrap();
        let far = linkmodel::free_space_loss(2.0 * d, f).unwrap();
        prop_assert!((near / far - 4.0).abs() < 1e-9);
    }

    #[test]
    fn antenna_gain_bounded(phi in -0.5..0.5f64) {
        let g = linkmodel::receive_antenna_gain(phi, 1.0f64.to_radians(), 1.0);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
    }

    #[test]
    fn surrogate_tracks_small_phase_errors(
        (w, g) in hermitian(3),
        theta in prop::collection::vec(-0.05..0.05f64, 3),
    ) {
        let q = quad_surrogate(&w, &g).unwrap();
        let exact = exact_gain(&w, &g, &theta);
        prop_assert!((q.eval(&theta) - exact).abs() <= 1e-2 * exact.abs() + 1e-12);
    }

    #[test]
    fn gain_bounded_by_largest_eigenvalue(
        (w, g) in hermitian(3),
        theta in prop::collection::vec(-3.0..3.0f64, 3),
    ) {
        // perturbing phases keeps the link norm
        let lmax = w.clone().symmetric_eigenvalues().max();
        let exact = exact_gain(&w, &g, &theta);
        prop_assert!(exact <= lmax * g.norm_squared() * (1.0 + 1e-9));
    }

    #[test]
    fn formatted_numbers_keep_twelve_digits(x in -1e12..1e12f64) {
        let back: f64 = fmt_num(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-11 * x.abs() + 1e-300);
    }
}
