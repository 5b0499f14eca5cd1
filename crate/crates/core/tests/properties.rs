use nalgebra::Vector3;
use proptest::prelude::*;

use solilab::config::{format_vec3, Config};
use solilab::diagnostics::{fit_decay, weighted_field_norm, weighted_norm, BETA};
use solilab::dynamics::wave_group;
use solilab::experiment::{perturbation, Perturbation};
use solilab::grid::Grid3;
use solilab::soliton::{FieldPair, PhaseState};
use solilab::symplectic::omega;

fn grid() -> Grid3 {
    Grid3::new(16, 8.0).unwrap()
}

fn bump_state(grid: &Grid3, c: [f64; 3], w: f64, a: f64, q: [f64; 3], p: [f64; 3]) -> PhaseState {
    let c = Vector3::from(c);
    let mut y = PhaseState::zeros(grid);
    y.fields = FieldPair::from_real(
        grid,
        &grid.sample(|x| a * (-(x - c).norm_squared() / (2.0 * w * w)).exp()),
        &grid.sample(|x| (x[0] - c[0]) * (-(x - c).norm_squared() / (w * w)).exp()),
    );
    y.q = Vector3::from(q);
    y.p = Vector3::from(p);
    y
}

fn coord() -> impl Strategy<Value = [f64; 3]> {
    [-1.5..1.5f64, -1.5..1.5f64, -1.5..1.5f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn omega_is_antisymmetric(c1 in coord(), c2 in coord(), w in 0.8..1.6f64, q in coord(), p in coord()) {
        let g = grid();
        let a = bump_state(&g, c1, w, 1.0, q, p);
        let b = bump_state(&g, c2, 1.1, -0.7, p, q);
        let (ab, ba) = (omega(&g, &a, &b), omega(&g, &b, &a));
        prop_assert!((ab + ba).abs() <= 1e-12 * ab.abs().max(1.0));
        prop_assert!(omega(&g, &a, &a).abs() <= 1e-12);
    }

    #[test]
    fn weighted_norm_grows_with_weight(c in coord(), w in 0.8..1.6f64, a1 in 0.0..3.0f64, da in 0.1..2.0f64) {
        let g = grid();
        let y = bump_state(&g, c, w, 1.0, [0.0; 3], [0.0; 3]);
        prop_assert!(weighted_field_norm(&g, &y.fields, a1) <= weighted_field_norm(&g, &y.fields, a1 + da));
        prop_assert!(weighted_field_norm(&g, &y.fields, -a1 - da) <= weighted_field_norm(&g, &y.fields, -a1));
    }

    #[test]
    fn wave_group_composes(c in coord(), t in -3.0..3.0f64, s in -3.0..3.0f64, v in coord()) {
        let g = grid();
        let v = Vector3::from(v) * 0.5;
        let f = bump_state(&g, c, 1.0, 1.0, [0.0; 3], [0.0; 3]).fields;
        let ab = wave_group(&g, &wave_group(&g, &f, &v, t), &v, s);
        let direct = wave_group(&g, &f, &v, t + s);
        let mut d = ab.clone();
        d.axpy(-1.0, &direct);
        prop_assert!(d.full_norm(&g) <= 1e-12 * direct.full_norm(&g));
    }

    #[test]
    fn power_law_fit_recovers_exponent(p in -3.0..-0.2f64, a in 0.01..100.0f64, t0 in 1.0..5.0f64) {
        let t: Vec<f64> = (0..20).map(|i| t0 + 0.5 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|s| a * s.powf(p)).collect();
        let fit = fit_decay(&t, &y, (t0, t0 + 10.0)).unwrap();
        prop_assert!((fit.exponent - p).abs() < 1e-10);
        prop_assert!((fit.prefactor - a).abs() < 1e-8 * a);
        prop_assert!(fit.residual < 1e-10);
    }

    #[test]
    fn perturbation_has_requested_size(seed in any::<u64>(), amp in 1e-4..1e-1f64, fw in 0.0..1.0f64, kw in 0.0..1.0f64) {
        prop_assume!(fw + kw > 0.05);
        let g = grid();
        let spec = Perturbation { amplitude: amp, bumps: 2, width: 1.0, field_weight: fw, kick_weight: kw };
        let z = perturbation(&g, &spec, &Vector3::zeros(), seed);
        prop_assert!((weighted_norm(&g, &z, BETA) - amp).abs() < 1e-12 * amp);
        prop_assert_eq!(z.clone(), perturbation(&g, &spec, &Vector3::zeros(), seed));
    }

    #[test]
    fn config_text_round_trips(
        entries in prop::collection::vec(("[a-z]{1,6}", "[a-z_]{1,8}", "[A-Za-z0-9_.-]{1,12}"), 0..12),
        v in coord(),
    ) {
        let mut c = Config::default();
        for (s, k, val) in &entries {
            c.set(s, k, val);
        }
        c.set("soliton", "v", format_vec3(&Vector3::from(v)));
        let back = Config::parse(&c.to_text()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.get_vec3("soliton", "v").unwrap(), Some(Vector3::from(v)));
    }
}
