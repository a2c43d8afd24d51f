//! Shared fixtures for the benchmarks.

use stixel_core::{generate, Scene, SceneSpec};

/// A narrow, tall noisy street scene with quantized disparities.
pub fn street_scene(width: usize, height: usize, seed: u64) -> Scene {
    let text = format!(
        r#"
        width = {width}
        height = {height}
        d_max = 128
        noise_sigma = 0.5
        outlier_rate = 0.05
        invalid_rate = 0.05
        quantization = 0.35
        rng_seed = {seed}

        [[ground]]
        rows = [1, {g}]
        a = 120.0
        b = {b}

        [[objects]]
        columns = [0, {half}]
        rows = [{o0}, {o1}]
        a = 70.0
        class = 1
        "#,
        g = height * 45 / 100,
        b = -100.0 / height as f64,
        half = width / 2,
        o0 = height / 6,
        o1 = height * 2 / 3,
    );
    let spec = SceneSpec::from_toml_str(&text).expect("fixture spec parses");
    generate(&spec).expect("fixture spec is valid")
}
