use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weatherforge::occlusion::{generate_snow_layer, snow_flakes, LayerSpec};

#[test]
fn snow_layer_matches_an_independent_sampler() {
    let (h, w) = (64usize, 64usize);
    let density = 50.0 * 1e6 / (h * w) as f32;
    let spec = LayerSpec::snow(density, [1.5, 3.0], 0.7, 3);
    let flakes = snow_flakes((h, w), &spec).unwrap();

    // one Bernoulli for the fractional count, then six uniforms per flake
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let _bump: f64 = rng.random();
    let mut expected = Vec::new();
    for _ in 0..50 {
        let draws: [f64; 6] = std::array::from_fn(|_| rng.random());
        expected.push((draws[0] * w as f64, draws[1] * h as f64, 1.5 + 1.5 * draws[2]));
    }
    assert_eq!(flakes.len(), 50);
    for (f, (cx, cy, r)) in flakes.iter().zip(&expected) {
        assert_eq!((f.cx, f.cy), (*cx, *cy));
        assert!((f.radius - r).abs() < 1e-6);
        assert!((0.6..=1.0).contains(&f.eccentricity));
    }

    let map = generate_snow_layer((h, w), &spec).unwrap();
    let max = map.data().iter().cloned().fold(0.0f32, f32::max);
    assert!(max <= 0.7 && max > 0.0);
    for f in &flakes {
        let (x, y) = (f.cx as usize, f.cy as usize);
        assert!(map.get(x, y) > 0.0, "flake center ({x},{y}) not rendered");
    }
}

#[test]
fn zero_peak_and_inverted_radius() {
    let spec = LayerSpec::snow(5000.0, [1.0, 2.0], 0.0, 1);
    assert!(generate_snow_layer((32, 32), &spec).unwrap().data().iter().all(|&v| v == 0.0));
    let bad = LayerSpec::snow(5000.0, [3.0, 2.0], 0.5, 1);
    assert!(generate_snow_layer((32, 32), &bad).is_err());
}
