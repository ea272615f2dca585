//! Statistical and analytical oracles for the engine and the sampler.

use std::collections::BTreeSet;

use packlab_core::engine::{build_grid, fibonacci_sphere, pack, PackingState};
use packlab_core::params::{Assignment, ParamKind};
use packlab_core::recipe::{Ingredient, PackingVolume, Recipe};
use packlab_core::rng::{derive_seed, engine_rng};
use packlab_core::sampler::{build_job_matrix, expand_even, sample_assignments, ExperimentConfig, ParameterSpec};
use packlab_core::stats;

#[test]
fn sphere_grid_fills_octants_evenly() {
    for n in [1000, 5000] {
        let pts = fibonacci_sphere(n, 30.0);
        let mut oct = [0usize; 8];
        for p in &pts {
            let i = (p[0] >= 0.0) as usize | ((p[1] >= 0.0) as usize) << 1 | ((p[2] >= 0.0) as usize) << 2;
            oct[i] += 1;
        }
        let expect = n as f64 / 8.0;
        for c in oct {
            assert!((c as f64 - expect).abs() <= 0.05 * expect, "{oct:?}");
        }
    }
}

#[test]
fn sphere_grid_spacing_tracks_request() {
    let grid = build_grid(&PackingVolume::sphere_surface(40.0), 2.0).unwrap();
    let area = 4.0 * std::f64::consts::PI * 1600.0;
    let per_point = area / grid.len() as f64;
    assert!((per_point - 4.0).abs() < 0.4, "{per_point}");
}

#[test]
fn random_drop_points_are_uniform_over_the_grid() {
    let recipe = Recipe::new("u", PackingVolume::plane2d(60.0, 60.0), 1.0, vec![Ingredient::new("s", 1.0, 1)]);
    let mut state = PackingState::new(&recipe).unwrap();
    let mut rng = engine_rng(3);
    let mut counts = vec![0u64; 36];
    for _ in 0..36_000 {
        let d = state.choose_drop_point(0, &mut rng).unwrap();
        let bx = ((d.position[0] / 10.0) as usize).min(5);
        let by = ((d.position[1] / 10.0) as usize).min(5);
        counts[by * 6 + bx] += 1;
    }
    // The grid has 61 points per axis, so edge bins get one extra column.
    let g = state.grid();
    let mut expected = vec![0f64; 36];
    for p in g.points() {
        let bx = ((p[0] / 10.0) as usize).min(5);
        let by = ((p[1] / 10.0) as usize).min(5);
        expected[by * 6 + bx] += 36_000.0 / g.len() as f64;
    }
    let chi: f64 = counts.iter().zip(&expected).map(|(&o, e)| (o as f64 - e).powi(2) / e).sum();
    assert!(chi < stats::chi_square_critical(35, 0.01), "chi2 {chi}");
}

#[test]
fn partner_weight_sets_biased_fraction() {
    let b = Ingredient::new("B", 1.0, 10).with_partner("A", 0.5, 5.0);
    let recipe = Recipe::new(
        "w",
        PackingVolume::plane2d(50.0, 50.0),
        1.0,
        vec![Ingredient::new("A", 2.0, 1), b],
    );
    let mut state = PackingState::new(&recipe).unwrap();
    state.insert(0, [25.0, 25.0, 0.0]);
    let mut rng = engine_rng(11);
    let n = 20_000;
    let biased = (0..n).filter(|_| state.choose_drop_point(1, &mut rng).unwrap().biased).count();
    let frac = biased as f64 / n as f64;
    assert!((frac - 0.5).abs() <= 0.02, "{frac}");
}

#[test]
fn even_sampling_hits_both_endpoints() {
    let specs = vec![
        ParameterSpec::even("ingredient.s.radius", ParamKind::Numeric, 2.0, 7.0, 6),
        ParameterSpec::even("ingredient.s.nb_jitter", ParamKind::Integer, 5.0, 500.0, 4),
    ];
    let lattice = expand_even(&specs).unwrap();
    assert_eq!(lattice.len(), 24);
    let radii: BTreeSet<String> = lattice.iter().map(|a| a["ingredient.s.radius"].to_string()).collect();
    assert!(radii.contains("2") && radii.contains("7"), "{radii:?}");
    let jitters: BTreeSet<String> = lattice.iter().map(|a| a["ingredient.s.nb_jitter"].to_string()).collect();
    assert_eq!(jitters, ["5", "170", "335", "500"].iter().map(|s| s.to_string()).collect());
}

fn cfg(n: u32) -> ExperimentConfig {
    let recipe = Recipe::new("c", PackingVolume::plane2d(40.0, 40.0), 2.0, vec![Ingredient::new("s", 2.0, 10)]);
    let specs = vec![
        ParameterSpec::even("ingredient.s.radius", ParamKind::Numeric, 1.0, 3.0, 5),
        ParameterSpec::even("ingredient.s.nb_jitter", ParamKind::Integer, 1.0, 10.0, 10),
    ];
    ExperimentConfig::new(recipe, specs, n, 2)
}

#[test]
fn oversized_lattice_keeps_an_ordered_subset() {
    let full = expand_even(&cfg(50).specs).unwrap();
    let picked = sample_assignments(&cfg(12)).unwrap();
    assert_eq!(picked.len(), 12);
    let pos: Vec<usize> = picked.iter().map(|a| full.iter().position(|f| f == a).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{pos:?}");
    assert_eq!(picked, sample_assignments(&cfg(12)).unwrap());
    assert_ne!(picked, sample_assignments(&cfg(12).with_base_seed(9)).unwrap());
}

#[test]
fn job_matrix_seeds_are_derived_and_distinct() {
    let jobs = build_job_matrix(&cfg(50).with_base_seed(4)).unwrap();
    let mut all = BTreeSet::new();
    for j in &jobs {
        for (r, s) in j.seeds.iter().enumerate() {
            assert_eq!(*s, derive_seed(4, j.run_index as u64, r as u64));
            assert!(all.insert(*s));
        }
    }
}

#[test]
fn greedy_plane_fill_matches_saturation_density() {
    // Random sequential adsorption of disks saturates near 0.547 coverage;
    // a fine grid with generous jitter should land close to that.
    let ing = Ingredient::new("s", 2.0, 2000).with_jitter(30, 2.0).with_rejection_threshold(400);
    let recipe = Recipe::new("rsa", PackingVolume::plane2d(100.0, 100.0).with_periodic(true), 0.5, vec![ing]);
    let out = pack(&recipe, &Assignment::new(), 1).unwrap();
    let cov = out.instances.len() as f64 * std::f64::consts::PI * 4.0 / 10_000.0;
    assert!((0.45..0.62).contains(&cov), "{cov}");
}
