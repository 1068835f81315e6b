//! The `canopy` command-line front end.
//!
//! Exit codes: 0 on success, 1 when a stage fails, 2 for bad arguments or
//! configuration.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud_io::{density_map, fuse_spectral, read_cloud_file, write_text_cloud, PointCloud, Raster};
use crate::config::RunConfig;
use crate::detect::{run_detection, write_tree_csv};
use crate::error::{argument, Error, Result};
use crate::eval::{match_stems, prf};
use crate::ground::{pmf_ground_mask, statistical_outlier_mask};
use crate::kernels::{farthest_point_sampling, sample_blocks};
use crate::voxel::voxelize;

#[derive(Debug, Parser)]
#[command(name = "canopy", version, about = "Tree detection for airborne LiDAR point clouds")]
pub struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or directory when the input is a directory of tiles
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect trees and write one CSV row per tree
    Detect {
        input: PathBuf,
        #[arg(long)]
        ret_thresh: Option<u32>,
        #[arg(long)]
        comp_threshold: Option<usize>,
    },
    /// Write a per-point ground mask (1 = ground)
    Ground {
        input: PathBuf,
        /// Also write a per-point outlier mask (1 = outlier among non-ground points)
        #[arg(long)]
        outliers: Option<PathBuf>,
    },
    /// Voxelize a cloud into a binary grid dump
    Voxelize { input: PathBuf },
    /// Write a points-per-square-metre raster as CSV plus a PGM preview
    Density {
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        cell_size: f64,
    },
    /// Score predicted stems against reference stems
    Evaluate {
        predicted: PathBuf,
        truth: PathBuf,
        #[arg(long)]
        radius: Option<f64>,
        /// Print an aligned table instead of CSV
        #[arg(long)]
        text: bool,
    },
    /// Attach raster spectral bands to every point
    Fuse { input: PathBuf, raster: PathBuf },
    /// Draw training blocks, one line of point indices per block
    Sample {
        input: PathBuf,
        #[arg(long)]
        block_size: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        blocks: Option<usize>,
        /// Reduce each block to this many points by furthest point sampling
        #[arg(long)]
        fps: Option<usize>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Argument(_) | Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let config = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let threads = match cli.common.threads {
        Some(0) => return Err(argument("--threads must be >= 1")),
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| argument(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &cli.common, config))
}

fn require_input(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(argument(format!("input not found: {}", path.display())));
    }
    Ok(())
}

fn require_output(common: &Common) -> Result<&Path> {
    common.output.as_deref().ok_or_else(|| argument("--output is required"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Runs `per_tile` on one cloud file, or on every cloud file of a directory
/// writing `<tile>.<ext>` into the output directory. Summary lines are
/// printed in tile-name order.
fn for_tiles(
    input: &Path,
    output: &Path,
    ext: &str,
    per_tile: impl Fn(&PointCloud, &Path) -> Result<String> + Sync,
) -> Result<()> {
    require_input(input)?;
    if !input.is_dir() {
        let cloud = read_cloud_file(input)?;
        info!("{}: {} points", input.display(), cloud.len());
        println!("{}", per_tile(&cloud, output)?);
        return Ok(());
    }
    let mut tiles: Vec<PathBuf> = fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| ["las", "txt", "xyz"].contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    tiles.sort();
    fs::create_dir_all(output)?;
    let lines: Vec<Result<String>> = tiles
        .par_iter()
        .map(|tile| {
            let stem = tile.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let cloud = read_cloud_file(tile)?;
            debug!("{}: {} points", tile.display(), cloud.len());
            let line = per_tile(&cloud, &output.join(format!("{stem}.{ext}")))?;
            Ok(format!("{}: {line}", tile.file_name().unwrap_or_default().to_string_lossy()))
        })
        .collect();
    for line in lines {
        println!("{}", line?);
    }
    Ok(())
}

fn dispatch(command: Command, common: &Common, mut config: RunConfig) -> Result<()> {
    match command {
        Command::Detect { input, ret_thresh, comp_threshold } => {
            if let Some(r) = ret_thresh {
                config.detector.ret_thresh = r;
            }
            if let Some(c) = comp_threshold {
                config.detector.comp_threshold = c;
            }
            config.detector.validate()?;
            for_tiles(&input, require_output(common)?, "csv", |cloud, out| {
                let spec = config.grid.spec_for(&cloud.bounds())?;
                let d = run_detection(cloud, &spec, &config.pmf, &config.sor, &config.detector)?;
                write_tree_csv(&d.regions, create(out)?)?;
                Ok(format!("trees={}", d.regions.len()))
            })
        }
        Command::Ground { input, outliers } => {
            let output = require_output(common)?;
            if outliers.is_some() && input.is_dir() {
                return Err(argument("--outliers takes a single input file"));
            }
            for_tiles(&input, output, "mask", |cloud, out| {
                let mask = pmf_ground_mask(cloud, &config.pmf)?;
                mask.write(create(out)?)?;
                if let Some(path) = &outliers {
                    let rest: Vec<usize> = (0..cloud.len()).filter(|&i| !mask.flags[i]).collect();
                    let mut flags = vec![false; cloud.len()];
                    if rest.len() > config.sor.k {
                        let sub = statistical_outlier_mask(&cloud.select(&rest), &config.sor)?;
                        for (&i, o) in rest.iter().zip(sub) {
                            flags[i] = o;
                        }
                    }
                    crate::ground::GroundMask::from_flags(flags).write(create(path)?)?;
                }
                Ok(format!("ground={} points={}", mask.retained_count, cloud.len()))
            })
        }
        Command::Voxelize { input } => for_tiles(&input, require_output(common)?, "vox", |cloud, out| {
            let spec = config.grid.spec_for(&cloud.bounds())?;
            let grid = voxelize(cloud, &spec)?;
            let mut w = create(out)?;
            grid.write_dump(&mut w)?;
            w.flush()?;
            Ok(format!("occupied={} dropped={}", grid.occupied_count(), grid.dropped()))
        }),
        Command::Density { input, cell_size } => {
            if !(cell_size.is_finite() && cell_size > 0.0) {
                return Err(argument(format!("--cell-size must be > 0, got {cell_size}")));
            }
            for_tiles(&input, require_output(common)?, "csv", |cloud, out| {
                let raster = density_map(cloud, cell_size)?;
                raster.write_csv(create(out)?)?;
                raster.write_pgm(0, create(&out.with_extension("pgm"))?)?;
                Ok(format!("cells={}x{}", raster.width(), raster.height()))
            })
        }
        Command::Evaluate { predicted, truth, radius, text } => {
            let radius = radius.unwrap_or(config.eval_radius);
            if !(radius.is_finite() && radius > 0.0) {
                return Err(argument(format!("--radius must be > 0, got {radius}")));
            }
            require_input(&predicted)?;
            require_input(&truth)?;
            let report = prf(match_stems(&read_stems(&predicted)?, &read_stems(&truth)?, radius)?.counts);
            let rendered = if text {
                format!("{report}\n")
            } else {
                format!("{}\n{}\n", crate::eval::EvalReport::CSV_HEADER, report.csv_row())
            };
            if let Some(out) = &common.output {
                let mut w = create(out)?;
                w.write_all(rendered.as_bytes())?;
                w.flush()?;
            }
            print!("{rendered}");
            Ok(())
        }
        Command::Fuse { input, raster } => {
            let output = require_output(common)?;
            require_input(&input)?;
            require_input(&raster)?;
            let cloud = read_cloud_file(&input)?;
            let raster = Raster::read_csv(BufReader::new(File::open(&raster)?))?;
            let fused = fuse_spectral(&cloud, &raster)?;
            write_text_cloud(&fused, create(output)?)?;
            println!("points={}", fused.len());
            Ok(())
        }
        Command::Sample { input, block_size, points, blocks, fps } => {
            let output = require_output(common)?;
            require_input(&input)?;
            let s = config.sampling;
            let block_size = block_size.unwrap_or(s.block_size);
            let n_points = points.unwrap_or(s.n_points);
            let n_blocks = blocks.unwrap_or(s.n_blocks);
            if fps == Some(0) || fps.is_some_and(|m| m > n_points) {
                return Err(argument("--fps must lie in 1..=points per block"));
            }
            let cloud = read_cloud_file(&input)?;
            let mut drawn = sample_blocks(&cloud, block_size, n_points, n_blocks, common.seed)?;
            if let Some(m) = fps {
                let mut rng = ChaCha8Rng::seed_from_u64(common.seed ^ 0x5EED_F00D);
                for block in drawn.iter_mut().filter(|b| !b.is_empty()) {
                    let pts: Vec<[f64; 3]> = block.iter().map(|&i| cloud.positions()[i]).collect();
                    let start = rng.random_range(0..pts.len());
                    let picked = farthest_point_sampling(&pts, m, start)?;
                    *block = picked.into_iter().map(|k| block[k]).collect();
                }
            }
            let mut w = create(output)?;
            for block in &drawn {
                let line: Vec<String> = block.iter().map(|i| i.to_string()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
            w.flush()?;
            println!("blocks={}", drawn.len());
            Ok(())
        }
    }
}

/// Stem positions from a CSV with `stem_x`/`stem_y` or `x`/`y` columns.
fn read_stems(path: &Path) -> Result<Vec<[f64; 2]>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let column = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
    let (Some(cx), Some(cy)) = (column(&["stem_x", "x"]), column(&["stem_y", "y"])) else {
        return Err(Error::Format(format!("{}: needs stem_x/stem_y or x/y columns", path.display())));
    };
    let mut out = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Format(e.to_string()))?;
        let field = |c: usize| -> Result<f64> {
            row.get(c)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line: n + 2, message: format!("bad coordinate in {}", path.display()) })
        };
        out.push([field(cx)?, field(cy)?]);
    }
    Ok(out)
}
