//! Procedural clean scenes with matching depth, used as synthesis inputs
//! when no photographs are at hand and as test fixtures.
//!
//! A scene is a ground plane of saturated tiles receding towards a horizon,
//! a few flat-fronted blocks standing on it, and optionally a bright sky.
//! The tile and block palette always keeps one channel low, so haze-free
//! patches have a near-zero dark channel, as natural outdoor scenes do.

use rand::Rng;

use crate::imgcore::{Image, ScalarMap};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneOptions {
    /// Paint a sky above the horizon.
    pub sky: bool,
    /// Depth of the nearest ground row, meters.
    pub near_depth: f32,
    /// Depth at the horizon, meters.
    pub far_depth: f32,
    /// Depth assigned to sky pixels, meters.
    pub sky_depth: f32,
    /// Number of standing blocks.
    pub blocks: usize,
}

impl Default for SceneOptions {
    fn default() -> Self {
        SceneOptions {
            sky: true,
            near_depth: 4.0,
            far_depth: 160.0,
            sky_depth: 400.0,
            blocks: 5,
        }
    }
}

fn saturated_color(rng: &mut impl Rng) -> [f32; 3] {
    let low = rng.random_range(0.0..0.06f32);
    let mid = rng.random_range(0.15..0.7f32);
    let high = rng.random_range(0.45..0.95f32);
    let mut c = [low, mid, high];
    // random channel permutation
    for i in (1..3).rev() {
        let j = rng.random_range(0..=i);
        c.swap(i, j);
    }
    c
}

/// Builds a `width x height` clean image and its depth map (meters).
pub fn procedural_scene(width: usize, height: usize, seed: u64, opts: &SceneOptions) -> (Image, ScalarMap) {
    let mut rng = rng_from_seed(derive_seed(&[seed, 0x5CE7E]));
    let horizon = if opts.sky {
        ((height as f32) * rng.random_range(0.2..0.35f32)) as usize
    } else {
        0
    };
    let ground_rows = (height - horizon).max(1) as f32;
    let ground_depth = |y: usize| -> f32 {
        let s = (y.saturating_sub(horizon) as f32 + 0.5) / ground_rows;
        opts.far_depth * (opts.near_depth / opts.far_depth).powf(s)
    };

    let tile = rng.random_range(16..=28usize);
    let tiles_x = width / tile + 2;
    let tiles_y = height / tile + 2;
    let palette: Vec<[f32; 3]> = (0..tiles_x * tiles_y).map(|_| saturated_color(&mut rng)).collect();

    struct Block {
        x0: usize,
        x1: usize,
        y0: usize,
        y1: usize,
        color: [f32; 3],
        depth: f32,
    }
    let mut blocks: Vec<Block> = (0..opts.blocks)
        .map(|_| {
            let base = rng.random_range(horizon + (height - horizon) / 4..height.max(horizon + 2));
            let bw = rng.random_range(width / 10..=width / 4).max(12);
            let bh = rng.random_range(height / 8..=height / 3).max(12);
            let x0 = rng.random_range(0..width.saturating_sub(bw).max(1));
            Block {
                x0,
                x1: (x0 + bw).min(width),
                y0: base.saturating_sub(bh),
                y1: base,
                color: saturated_color(&mut rng),
                depth: ground_depth(base),
            }
        })
        .collect();
    // painter's order: far blocks first
    blocks.sort_by(|a, b| b.depth.total_cmp(&a.depth));

    let sky_top = [
        rng.random_range(0.55..0.7f32),
        rng.random_range(0.7..0.8f32),
        rng.random_range(0.85..0.95f32),
    ];
    let noise_seed = derive_seed(&[seed, 0x0015E]);

    let mut depth = vec![0.0f32; width * height];
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let mut color;
            let mut d;
            if y < horizon {
                let s = y as f32 / horizon.max(1) as f32;
                color = [
                    sky_top[0] + 0.15 * s,
                    sky_top[1] + 0.1 * s,
                    sky_top[2] + 0.03 * s,
                ];
                d = opts.sky_depth;
            } else {
                let ty = (y - horizon) / tile;
                let tx = x / tile;
                color = palette[(ty * tiles_x + tx) % palette.len()];
                d = ground_depth(y);
            }
            for b in &blocks {
                if x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1 && y >= horizon.saturating_sub(height / 6) {
                    color = b.color;
                    d = b.depth;
                }
            }
            if y >= horizon {
                let n = pixel_noise(noise_seed, x, y);
                for c in &mut color {
                    *c = (*c + 0.02 * n).clamp(0.0, 1.0);
                }
            }
            data.extend_from_slice(&color);
            depth[y * width + x] = d;
        }
    }
    let img = Image::from_clamped(width, height, data).expect("scene raster has consistent size");
    let depth = ScalarMap::new(width, height, depth).expect("depth raster has consistent size");
    (img, depth)
}

/// Hash noise in `[-1, 1)`.
fn pixel_noise(seed: u64, x: usize, y: usize) -> f32 {
    let h = derive_seed(&[seed, x as u64, y as u64]);
    (h >> 40) as f32 / (1u64 << 23) as f32 - 1.0
}
