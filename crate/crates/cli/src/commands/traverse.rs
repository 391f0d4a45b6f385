//! `traverse`: render latent-traversal grids. Each requested latent
//! dimension gets a row of images sweeping an offset over
//! `[-range, +range]` around an anchor sample while every other coordinate
//! stays at the anchor. Decoder and generator grids are emitted separately
//! plus a combined grid (decoder rows on top), and the generator
//! additionally gets a nuisance-dimension grid when `s_dim > 0`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::{Array2, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use id_distill_core::nets::NetworkHandle;
use id_distill_core::train::{compose_z, LatentCode};

use crate::config::ExperimentConfig;
use crate::manifest::RunDir;

use super::artifacts::{emits_signed_images, load_run};

#[derive(Debug, Clone)]
pub struct TraverseOptions {
    /// Code dimensions to sweep; defaults to all of them.
    pub dims: Option<Vec<usize>>,
    /// Sweep half-width in prior standard deviations.
    pub range: f64,
    /// Images per row.
    pub steps: usize,
    /// Seed of the anchor sample.
    pub anchor_seed: u64,
}

impl Default for TraverseOptions {
    fn default() -> Self {
        TraverseOptions {
            dims: None,
            range: 3.0,
            steps: 10,
            anchor_seed: 0,
        }
    }
}

/// Sweep offsets: `steps` points evenly spaced over `[-range, +range]`;
/// a single step sits at offset 0 so it reproduces the anchor exactly.
pub fn traversal_offsets(range: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![0.0];
    }
    (0..steps)
        .map(|i| -range + 2.0 * range * i as f64 / (steps - 1) as f64)
        .collect()
}

/// One named grid: `rows[dim][step]` of `[C, H, W]` images in `[0, 1]`.
pub struct TraversalGrid {
    pub name: String,
    pub rows: Vec<Vec<ArrayD<f32>>>,
}

fn standard_normal(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f32> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_simple_fn((n, d), || {
        let v: f64 = StandardNormal.sample(rng);
        v as f32
    })
}

fn single_image(batch: ArrayD<f32>) -> ArrayD<f32> {
    batch.index_axis(ndarray::Axis(0), 0).to_owned().into_dyn()
}

fn decode_image(decoder: &mut NetworkHandle<f32>, c: &Array2<f32>) -> Result<ArrayD<f32>> {
    let logits = decoder.forward(&c.clone().into_dyn())?;
    Ok(single_image(logits.mapv(|v| 1.0 / (1.0 + (-v).exp()))))
}

/// How to map a generator's raw output into `[0, 1]` images.
#[derive(Clone, Copy, PartialEq)]
enum OutputRange {
    Unit,
    Signed,
    Logits,
}

fn generate_image(
    generator: &mut NetworkHandle<f32>,
    s: &Array2<f32>,
    c: &Array2<f32>,
    range: OutputRange,
) -> Result<ArrayD<f32>> {
    let z = compose_z(&LatentCode {
        s: s.clone(),
        c: c.clone(),
    })?;
    let out = generator.forward(&z)?;
    Ok(single_image(match range {
        OutputRange::Unit => out,
        OutputRange::Signed => out.mapv(|v| 0.5 * (v + 1.0)),
        OutputRange::Logits => out.mapv(|v| 1.0 / (1.0 + (-v).exp())),
    }))
}

/// Build all traversal grids for one seed's run without writing files.
pub fn build_grids(
    cfg: &ExperimentConfig,
    out_root: &Path,
    seed: u64,
    opts: &TraverseOptions,
) -> Result<Vec<TraversalGrid>> {
    if opts.steps == 0 {
        bail!("steps must be at least 1");
    }
    if !(opts.range >= 0.0 && opts.range.is_finite()) {
        bail!("range must be finite and non-negative");
    }
    let run = RunDir::new(out_root, &cfg.hash(), seed);
    let dataset_res = cfg.dataset.resolution;
    let channels = match cfg.dataset.variant.as_str() {
        "color" | "scream" => 3,
        _ => 1,
    };
    let mut loaded = load_run(cfg, &run, channels, dataset_res)?;

    let c_dim = cfg.stage1.c_dim;
    let dims: Vec<usize> = match &opts.dims {
        Some(d) => {
            for &dim in d {
                if dim >= c_dim {
                    bail!("dimension {dim} out of range for c_dim {c_dim}");
                }
            }
            d.clone()
        }
        None => (0..c_dim).collect(),
    };
    let offsets = traversal_offsets(opts.range, opts.steps);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.anchor_seed);
    let anchor_c = standard_normal(1, c_dim, &mut rng);

    let mut grids: Vec<TraversalGrid> = Vec::new();
    if let Some(decoder) = loaded.decoder.as_mut() {
        let mut rows = Vec::new();
        for &dim in &dims {
            let mut row = Vec::new();
            for &off in &offsets {
                let mut c = anchor_c.clone();
                c[[0, dim]] += off as f32;
                row.push(decode_image(decoder, &c)?);
            }
            rows.push(row);
        }
        grids.push(TraversalGrid {
            name: "decoder_c".into(),
            rows,
        });
    }
    if let Some(generator) = loaded.generator.as_mut() {
        let z_dim = generator.spec.input_shape[0];
        if z_dim < c_dim {
            bail!("generator latent width {z_dim} is narrower than c_dim {c_dim}");
        }
        let s_dim = z_dim - c_dim;
        let anchor_s = standard_normal(1, s_dim, &mut rng);
        let range = if cfg.stage2.enabled && cfg.stage2.mode == "vaegan" {
            OutputRange::Logits
        } else if emits_signed_images(generator) {
            OutputRange::Signed
        } else {
            OutputRange::Unit
        };

        let mut rows = Vec::new();
        for &dim in &dims {
            let mut row = Vec::new();
            for &off in &offsets {
                let mut c = anchor_c.clone();
                c[[0, dim]] += off as f32;
                row.push(generate_image(generator, &anchor_s, &c, range)?);
            }
            rows.push(row);
        }
        grids.push(TraversalGrid {
            name: "generator_c".into(),
            rows,
        });

        if s_dim > 0 {
            let mut rows = Vec::new();
            for dim in 0..s_dim {
                let mut row = Vec::new();
                for &off in &offsets {
                    let mut s = anchor_s.clone();
                    s[[0, dim]] += off as f32;
                    row.push(generate_image(generator, &s, &anchor_c, range)?);
                }
                rows.push(row);
            }
            grids.push(TraversalGrid {
                name: "generator_s".into(),
                rows,
            });
        }
    }
    if grids.is_empty() {
        bail!("run has neither a decoder nor a generator checkpoint to traverse");
    }

    // Side-by-side comparison: decoder rows stacked above generator rows.
    let dec = grids.iter().position(|g| g.name == "decoder_c");
    let gen = grids.iter().position(|g| g.name == "generator_c");
    if let (Some(d), Some(g)) = (dec, gen) {
        let mut rows = grids[d].rows.clone();
        rows.extend(grids[g].rows.clone());
        grids.push(TraversalGrid {
            name: "pair_c".into(),
            rows,
        });
    }
    Ok(grids)
}

/// Compose a grid into one raster: rows of images left to right, top to
/// bottom, grayscale for 1 channel and RGB for 3.
pub fn grid_to_png(grid: &TraversalGrid, path: &Path) -> Result<()> {
    let first = &grid.rows[0][0];
    let (c, h, w) = (first.shape()[0], first.shape()[1], first.shape()[2]);
    let (nrows, ncols) = (grid.rows.len(), grid.rows[0].len());
    let to_byte = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    match c {
        1 => {
            let mut img = image::GrayImage::new((ncols * w) as u32, (nrows * h) as u32);
            for (r, row) in grid.rows.iter().enumerate() {
                for (s, tile) in row.iter().enumerate() {
                    for y in 0..h {
                        for x in 0..w {
                            img.put_pixel(
                                (s * w + x) as u32,
                                (r * h + y) as u32,
                                image::Luma([to_byte(tile[[0, y, x]])]),
                            );
                        }
                    }
                }
            }
            img.save(path).with_context(|| format!("writing {}", path.display()))?;
        }
        3 => {
            let mut img = image::RgbImage::new((ncols * w) as u32, (nrows * h) as u32);
            for (r, row) in grid.rows.iter().enumerate() {
                for (s, tile) in row.iter().enumerate() {
                    for y in 0..h {
                        for x in 0..w {
                            img.put_pixel(
                                (s * w + x) as u32,
                                (r * h + y) as u32,
                                image::Rgb([
                                    to_byte(tile[[0, y, x]]),
                                    to_byte(tile[[1, y, x]]),
                                    to_byte(tile[[2, y, x]]),
                                ]),
                            );
                        }
                    }
                }
            }
            img.save(path).with_context(|| format!("writing {}", path.display()))?;
        }
        other => bail!("cannot rasterize {other}-channel images"),
    }
    Ok(())
}

/// Render traversal grids for one seed into its `figures/` directory.
pub fn cmd_traverse(
    cfg: &ExperimentConfig,
    out_root: &Path,
    seed: u64,
    opts: &TraverseOptions,
) -> Result<Vec<PathBuf>> {
    let grids = build_grids(cfg, out_root, seed, opts)?;
    let run = RunDir::new(out_root, &cfg.hash(), seed);
    std::fs::create_dir_all(run.figures())?;
    let mut written = Vec::new();
    for grid in &grids {
        let path = run.figures().join(format!(
            "traverse_{}_r{}_s{}_a{}.png",
            grid.name, opts.range, opts.steps, opts.anchor_seed
        ));
        grid_to_png(grid, &path)?;
        println!("wrote {}", path.display());
        written.push(path);
    }
    Ok(written)
}
