use weatherforge::metrics::{psnr, ColorMode};
use weatherforge::priors::{dark_channel, estimate_atmospheric_light, estimate_occlusion, estimate_transmission, OcclusionParams};
use weatherforge::restore::{restore_with_estimated, EstimateConfig};
use weatherforge::scene::{procedural_scene, SceneOptions};
use weatherforge::synth::{sample_weather_params, synthesize_sample, SamplingRanges, WeatherKind, WeatherType};

fn haze_fixture(seed: u64, light: f32) -> weatherforge::synth::DegradedSample {
    let (clean, depth) = procedural_scene(128, 128, seed, &SceneOptions::default());
    let mut p = sample_weather_params(seed, 0, WeatherKind::Haze, &SamplingRanges::default());
    p.atmosphere.light = light;
    p.lowlight_gamma = 1.0;
    synthesize_sample(&clean, &depth, &p).unwrap()
}

#[test]
fn atmospheric_light_and_transmission_on_haze_fixtures() {
    let mut worst_a = 0.0f32;
    let mut worst_t = 0.0f64;
    for seed in 0..12 {
        let s = haze_fixture(seed, 0.85);
        let dc = dark_channel(&s.degraded, 15).unwrap();
        let a = estimate_atmospheric_light(&s.degraded, &dc, 0.001).unwrap();
        worst_a = worst_a.max((a - 0.85).abs());
        let t = estimate_transmission(&s.degraded, a, 0.95, 15, 0.05).unwrap();
        let err = t
            .data()
            .iter()
            .zip(s.transmission.data())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / t.data().len() as f64;
        worst_t = worst_t.max(err);
    }
    assert!(worst_a <= 0.1, "light error {worst_a}");
    assert!(worst_t <= 0.15, "transmission error {worst_t}");
}

#[test]
fn occlusion_recall_on_rain_fixtures() {
    let mut hit = 0usize;
    let mut total = 0usize;
    let mut index = 0;
    let mut used = 0;
    while used < 8 {
        let p = sample_weather_params(77, index, WeatherKind::Rain, &SamplingRanges::default());
        index += 1;
        if p.weather_type != WeatherType::Rain {
            continue;
        }
        used += 1;
        let (clean, depth) = procedural_scene(128, 128, index, &SceneOptions::default());
        let s = synthesize_sample(&clean, &depth, &p).unwrap();
        let est = estimate_occlusion(&s.degraded, &OcclusionParams::default()).unwrap();
        for (g, e) in s.alpha.data().iter().zip(est.alpha().data()) {
            if *g > 0.3 {
                total += 1;
                hit += (*e > 0.0) as usize;
            }
        }
    }
    let recall = hit as f64 / total as f64;
    assert!(recall >= 0.5, "recall {recall} over {total} pixels");
}

#[test]
fn estimated_restoration_improves_haze() {
    let mut better = 0;
    for seed in 0..20 {
        let s = haze_fixture(seed, 0.9);
        let (r, _) = restore_with_estimated(&s.degraded, &EstimateConfig::default()).unwrap();
        let before = psnr(&s.degraded, &s.clean, ColorMode::Rgb).unwrap();
        let after = psnr(&r, &s.clean, ColorMode::Rgb).unwrap();
        better += (after > before) as usize;
    }
    assert!(better >= 18, "{better} of 20 improved");
}
