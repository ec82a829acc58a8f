//! `polyptych`: build banks, train, generate, edit and serve.

use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use image::RgbImage;
use log::info;
use polyptych_core::bank::{
    build_bank, decompose_multires, load_bank, pca_project, save_bank, Category, DEFAULT_MIN_CATEGORY_SIZE,
    DEFAULT_SIZES,
};
use polyptych_core::canvas::{
    blend, decompose_canvas, extract_sketch, generate_large, genre_switch, shuffle_patches, SketchCanvas, TileLayout,
};
use polyptych_core::evaluation::evaluate;
use polyptych_core::imageio::{self, rgb_to_tensor, tensor_to_gray, tensor_to_rgb};
use polyptych_core::training::{train, TrainConfig};
use polyptych_core::{FeatureExtractor32, ModelBundle32, Ratio, Tensor32};
use polyptych_service::{write_entry, ServeConfig, Template, REGISTRY_ENV};

#[derive(Parser)]
#[command(
    name = "polyptych",
    version,
    about = "Sketch-to-painting synthesis for a single artwork"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reference bank tools.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Train a model on one painting.
    Train {
        #[arg(long)]
        painting: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        /// JSON training config; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pix-Acc and Fréchet feature distance between two image directories.
    Eval {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a painting at twice the sketch resolution.
    Infer {
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tiling: Tiling,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cross-fade tile images, given in row-major layout order.
    Blend {
        /// Canvas size as WxH.
        #[arg(long, value_parser = parse_size)]
        canvas: (usize, usize),
        #[arg(long, value_parser = parse_size)]
        tile: (usize, usize),
        #[arg(long, value_parser = parse_size, default_value = "0x0")]
        overlap: (usize, usize),
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        tiles: Vec<PathBuf>,
    },
    /// Permute the blocks of a sketch (and mask) on a grid.
    Shuffle {
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        grid: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, requires = "mask")]
        mask_out: Option<PathBuf>,
    },
    /// Re-render a painting through another genre's model.
    Switch {
        #[arg(long)]
        painting: PathBuf,
        #[arg(long)]
        target_model: PathBuf,
        #[arg(long)]
        target_bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the extracted sketch here.
        #[arg(long)]
        sketch_out: Option<PathBuf>,
        #[command(flatten)]
        tiling: Tiling,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract a line sketch from an image.
    Sketch {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add a model to a registry directory.
    Register {
        #[arg(long, env = REGISTRY_ENV)]
        registry: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        genre: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        /// Template sketches; the file stem becomes the template id.
        #[arg(long = "template")]
        templates: Vec<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, env = REGISTRY_ENV)]
        registry: PathBuf,
    },
}

#[derive(Subcommand)]
enum BankCommand {
    /// Cluster multi-resolution patches of a painting.
    Build {
        #[arg(long)]
        painting: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_MIN_CATEGORY_SIZE)]
        min_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a JSON summary of a bank.
    Inspect {
        #[arg(long)]
        bank: PathBuf,
    },
    /// Project patch embeddings onto their principal components as CSV.
    Pca {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, default_value_t = 2)]
        dims: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Copy)]
struct Tiling {
    /// Tile size as WxH; the whole canvas is one tile when absent.
    #[arg(long, value_parser = parse_size)]
    tile: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_size, default_value = "0x0")]
    overlap: (usize, usize),
}

impl Tiling {
    fn layout(self, w: usize, h: usize) -> Result<TileLayout> {
        Ok(match self.tile {
            Some((tw, th)) => decompose_canvas(w, h, tw, th, self.overlap.0, self.overlap.1)?,
            None => TileLayout::single(w, h)?,
        })
    }

    fn tuple(self) -> Option<(usize, usize, usize, usize)> {
        self.tile.map(|(tw, th)| (tw, th, self.overlap.0, self.overlap.1))
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((n(w)?, n(h)?))
}

/// Overlay `patch` onto `base`, recursing into objects so nested sections
/// may be given in part.
fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn load_canvas(sketch: &Path, mask: Option<&Path>) -> Result<SketchCanvas<f32>> {
    let s = imageio::load_gray(sketch).with_context(|| format!("reading {}", sketch.display()))?;
    let m = mask
        .map(|p| imageio::load_rgb(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    Ok(SketchCanvas::from_images(&s, m.as_ref())?)
}

fn save_rgb(t: &Tensor32, path: &Path) -> Result<()> {
    imageio::save_rgb(&tensor_to_rgb(t)?, path).with_context(|| format!("writing {}", path.display()))
}

fn images_in(dir: &Path) -> Result<Vec<RgbImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    paths
        .iter()
        .map(|p| imageio::load_rgb(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bank(BankCommand::Build {
            painting,
            k,
            sizes,
            min_size,
            out,
        }) => {
            let img = imageio::load_rgb(&painting)?;
            let d = decompose_multires(&img, &sizes, Ratio::new(1, 2))?;
            for s in &d.skipped {
                log::warn!("size {} skipped: {}", s.size, s.reason);
            }
            let bank = build_bank(d.patches, &FeatureExtractor32::new(), k, min_size)?;
            save_bank(&bank, &out)?;
            println!(
                "{} patches, {} categories, {} outliers → {}",
                bank.patches.len(),
                bank.k,
                bank.outlier_count(),
                out.display()
            );
        }
        Command::Bank(BankCommand::Inspect { bank }) => {
            let bank = load_bank(&bank)?;
            let summary = serde_json::json!({
                "patches": bank.patches.len(),
                "k": bank.k,
                "outliers": bank.outlier_count(),
                "min_category_size": bank.min_category_size,
                "sizes": bank.sizes,
                "category_sizes": bank.members().iter().map(Vec::len).collect::<Vec<_>>(),
                "extractor_seed": bank.extractor_seed,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Bank(BankCommand::Pca { bank, dims, out }) => {
            let bank = load_bank(&bank)?;
            let emb: Vec<Vec<f32>> = bank.patches.iter().map(|p| p.embedding.clone()).collect();
            let proj = pca_project(&emb, dims)?;
            let mut csv = String::from("patch,scale,category");
            for d in 0..dims {
                csv += &format!(",pc{}", d + 1);
            }
            csv.push('\n');
            for (i, (p, pt)) in bank.patches.iter().zip(&proj.points).enumerate() {
                let cat = match p.category {
                    Category::Label(c) => c.to_string(),
                    Category::Outlier => "outlier".into(),
                };
                csv += &format!("{i},{},{cat}", p.scale);
                for v in pt {
                    csv += &format!(",{v}");
                }
                csv.push('\n');
            }
            match out {
                Some(p) => fs::write(&p, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Train {
            painting,
            bank,
            config,
            out,
        } => {
            let cfg: TrainConfig = match config {
                Some(p) => {
                    let overrides: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p)?)
                        .with_context(|| format!("parsing {}", p.display()))?;
                    let mut merged = serde_json::to_value(TrainConfig::default())?;
                    merge(&mut merged, overrides);
                    serde_json::from_value(merged).with_context(|| format!("invalid config {}", p.display()))?
                }
                None => TrainConfig::default(),
            };
            fs::create_dir_all(&out)?;
            let img = imageio::load_rgb(&painting)?;
            let bank = load_bank(&bank)?;
            let outcome = train::<f32>(&img, &bank, &cfg, Some(&out))?;
            let path = out.join("model.nply");
            outcome.model.save(&path)?;
            println!(
                "{} steps over {} epochs{}; model → {}",
                outcome.steps,
                outcome.epochs,
                if outcome.stopped_early { " (plateau)" } else { "" },
                path.display()
            );
        }
        Command::Eval { real, fake, out } => {
            let report = evaluate(&images_in(&real)?, &images_in(&fake)?, &FeatureExtractor32::new())?;
            let text = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => fs::write(&p, text)?,
                None => println!("{text}"),
            }
        }
        Command::Infer {
            sketch,
            mask,
            model,
            bank,
            out,
            tiling,
            seed,
        } => {
            let canvas = load_canvas(&sketch, mask.as_deref())?;
            let model = ModelBundle32::load(&model)?;
            let bank = load_bank(&bank)?;
            let size = canvas.size();
            let layout = tiling.layout(size.w, size.h)?;
            info!("{} tiles", layout.len());
            save_rgb(&generate_large(&canvas, &model, &bank, &layout, seed)?, &out)?;
        }
        Command::Blend {
            canvas,
            tile,
            overlap,
            out,
            tiles,
        } => {
            let layout = decompose_canvas(canvas.0, canvas.1, tile.0, tile.1, overlap.0, overlap.1)?;
            ensure!(
                tiles.len() == layout.len(),
                "layout has {} tiles, {} images given",
                layout.len(),
                tiles.len()
            );
            let images: Vec<Tensor32> = tiles
                .iter()
                .map(|p| Ok(rgb_to_tensor(&imageio::load_rgb(p)?)))
                .collect::<Result<_>>()?;
            save_rgb(&blend(&images, &layout)?, &out)?;
        }
        Command::Shuffle {
            sketch,
            mask,
            grid,
            seed,
            out,
            mask_out,
        } => {
            let canvas = load_canvas(&sketch, mask.as_deref())?;
            let shuffled = shuffle_patches(&canvas, grid, seed)?;
            imageio::save_gray(&tensor_to_gray(&shuffled.sketch)?, &out)?;
            if let Some(p) = mask_out {
                save_rgb(&shuffled.mask, &p)?;
            }
        }
        Command::Switch {
            painting,
            target_model,
            target_bank,
            out,
            sketch_out,
            tiling,
            seed,
        } => {
            let img = imageio::load_rgb(&painting)?;
            let model = ModelBundle32::load(&target_model)?;
            let bank = load_bank(&target_bank)?;
            let res = genre_switch(&img, &model, &bank, tiling.tuple(), seed)?;
            if let Some(p) = sketch_out {
                imageio::save_gray(&tensor_to_gray(&res.sketch)?, &p)?;
            }
            save_rgb(&res.painting, &out)?;
        }
        Command::Sketch { image, out } => {
            let s: Tensor32 = extract_sketch(&imageio::load_rgb(&image)?)?;
            imageio::save_gray(&tensor_to_gray(&s)?, &out)?;
        }
        Command::Register {
            registry,
            id,
            genre,
            model,
            bank,
            templates,
        } => {
            let model = ModelBundle32::load(&model)?;
            let bank = load_bank(&bank)?;
            let templates = templates
                .iter()
                .map(|p| {
                    let id = p.file_stem().and_then(|s| s.to_str()).context("template file name")?;
                    Ok(Template {
                        id: id.to_string(),
                        sketch: imageio::load_gray(p)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let path = write_entry(&registry, &id, &genre, &model, &bank, &templates)?;
            println!("registered {id} at {}", path.display());
        }
        Command::Serve { port, host, registry } => {
            if !registry.is_dir() {
                bail!("registry {} is not a directory", registry.display());
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(polyptych_service::serve(ServeConfig {
                addr: SocketAddr::new(host, port),
                registry_dir: registry,
            }))?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
