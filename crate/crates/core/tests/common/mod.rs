#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use weatherforge::scene::{procedural_scene, SceneOptions};
use weatherforge::synth::InputPair;
use weatherforge::{write_image, write_scalar_map};

/// Writes `n` procedural (clean, depth) pairs into `dir`.
pub fn write_inputs(dir: &Path, n: usize, size: usize) -> Vec<InputPair> {
    fs::create_dir_all(dir).unwrap();
    (0..n)
        .map(|i| {
            let (img, depth) = procedural_scene(size, size, 100 + i as u64, &SceneOptions::default());
            let clean = dir.join(format!("scene{i}.png"));
            let depth_path = dir.join(format!("scene{i}_depth.pfm"));
            write_image(&img, &clean, 8).unwrap();
            write_scalar_map(&depth, &depth_path).unwrap();
            InputPair {
                clean,
                depth: depth_path,
            }
        })
        .collect()
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn hash_tree(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = Sha256::digest(fs::read(&path).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, hex);
            }
        }
    }
    out
}
