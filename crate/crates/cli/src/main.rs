//! `omu`: build, query, compare and profile banked occupancy maps.
//!
//! Exit codes: 0 on success, 1 on I/O errors, 2 on invalid input or a
//! failed check.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use omu_core::io::{convert_graph, generate_room, parse_scans, read_map, save_map, write_scans, RoomSpec, ScanFile};
use omu_core::perf::workload_hash;
use omu_core::{
    model_run, scan_updates, speedup, CostMode, CostParams, MapConfig, OmuMap, Occupancy, RefOctree, VoxelKey,
    DEFAULT_ROWS_PER_BANK,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "omu", version, about = "Banked octree occupancy-mapping simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Baseline,
    Accel,
}

/// Options shared by every command that builds a map from scans.
#[derive(clap::Args)]
struct MapArgs {
    /// Scan file (ASCII NODE/P format, or a binary `.graph` scan graph).
    #[arg(long)]
    scans: PathBuf,
    /// Leaf edge length in meters.
    #[arg(long, allow_hyphen_values = true)]
    resolution: f64,
    /// Truncate rays longer than this many meters (0 disables the cap).
    #[arg(long, default_value_t = 50.0)]
    max_range: f64,
    /// Rows per memory bank in each PE.
    #[arg(long, default_value_t = DEFAULT_ROWS_PER_BANK)]
    rows: u32,
}

impl MapArgs {
    fn config(&self) -> Result<MapConfig> {
        let mut cfg = MapConfig::new(self.resolution)?;
        cfg.max_range = (self.max_range > 0.0).then_some(self.max_range);
        cfg.validate()?;
        Ok(cfg)
    }

    fn load(&self) -> Result<ScanFile> {
        load_scans(&self.scans)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a map, write its dump and a cycle breakdown CSV.
    Build {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Accel)]
        mode: Mode,
        /// Points per frame for FPS normalization.
        #[arg(long)]
        frame_points: Option<u64>,
        #[arg(long, hide = true)]
        no_prune: bool,
    },
    /// Classify points against a saved map.
    #[command(group(ArgGroup::new("input").required(true).args(["point", "batch"])))]
    Query {
        #[arg(long)]
        map: PathBuf,
        /// A single point `x,y,z`.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        point: Option<[f64; 3]>,
        /// File with one point per line (`x y z` or `x,y,z`).
        #[arg(long)]
        batch: Option<PathBuf>,
    },
    /// Check the banked engine against the pointer-octree reference.
    Compare {
        #[command(flatten)]
        map: MapArgs,
        /// Random keys queried in addition to every touched key.
        #[arg(long, default_value_t = 100_000)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-stage cycle breakdown in both cost modes and the modeled speedup.
    Breakdown {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        frame_points: Option<u64>,
        /// Charge ray casting serially instead of overlapping it with PE work.
        #[arg(long)]
        no_overlap: bool,
    },
    /// Memory utilization, prune-stack depths and node counts of a saved map.
    Stats {
        #[arg(long)]
        map: PathBuf,
    },
    /// Convert a binary scan graph to the ASCII scan format.
    Convert {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic room workload.
    Generate {
        /// Room size `x,y,z` in meters.
        #[arg(long, value_parser = parse_point, default_value = "4,4,2")]
        dims: [f64; 3],
        #[arg(long, default_value_t = 0.2)]
        resolution: f64,
        #[arg(long, default_value_t = 8)]
        scans: usize,
        #[arg(long, default_value_t = 4000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split([',', ' ', '\t'])
        .filter(|f| !f.is_empty())
        .map(|f| f.trim().parse::<f64>().map_err(|_| format!("not a number: {f:?}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok([x, y, z]),
        [_, _, _] => Err(format!("non-finite coordinate in {s:?}")),
        _ => Err(format!("expected three coordinates, got {s:?}")),
    }
}

fn load_scans(path: &Path) -> Result<ScanFile> {
    let scans = if path.extension().is_some_and(|e| e == "graph") { convert_graph(path) } else { parse_scans(path) };
    let scans = scans.with_context(|| format!("reading {}", path.display()))?;
    if scans.has_rotation() {
        eprintln!("warning: {}: NODE orientations are ignored; points are taken as world-frame", path.display());
    }
    Ok(scans)
}

fn load_map(path: &Path) -> Result<OmuMap> {
    read_map(path).with_context(|| format!("reading {}", path.display()))
}

fn build_map(scans: &ScanFile, cfg: MapConfig, costs: CostParams, rows: u32) -> Result<OmuMap> {
    let mut map = OmuMap::with_rows(cfg, costs, rows)?;
    for scan in &scans.scans {
        map.insert_scan(scan.origin, &scan.points)?;
    }
    Ok(map)
}

fn costs_for(mode: Mode) -> CostParams {
    match mode {
        Mode::Baseline => CostParams::for_mode(CostMode::Baseline),
        Mode::Accel => CostParams::for_mode(CostMode::Accelerated),
    }
}

fn build(
    args: &MapArgs,
    out: &Path,
    report_path: &Path,
    mode: Mode,
    frame_points: Option<u64>,
    no_prune: bool,
) -> Result<()> {
    ensure!(!no_prune, "pruning cannot be disabled when writing a map dump");
    let cfg = args.config()?;
    let scans = args.load()?;
    let map = build_map(&scans, cfg, costs_for(mode), args.rows)?;
    let mut report = map.report(workload_hash(&scans));
    report.frame_points = frame_points;
    save_map(out, &map).with_context(|| format!("writing {}", out.display()))?;
    fs::write(report_path, report.to_csv()).with_context(|| format!("writing {}", report_path.display()))?;

    let s = map.stats();
    println!("scans              {}", s.scans);
    println!("points             {} ({} rejected)", s.points, s.rejected_points);
    println!("voxel_updates      {}", s.processed);
    println!("nodes              {}", map.node_count());
    println!("bytes_used         {}", map.bytes_used());
    print!("{}", report.to_table());
    Ok(())
}

fn classify(map: &OmuMap, p: [f64; 3]) -> Occupancy {
    // a point outside the key cube can never have been observed
    map.query_point(p).unwrap_or(Occupancy::Unknown)
}

fn query(map_path: &Path, point: Option<[f64; 3]>, batch: Option<&Path>) -> Result<()> {
    let map = load_map(map_path)?;
    if let Some(p) = point {
        println!("{}", classify(&map, p));
        return Ok(());
    }
    let path = batch.expect("clap enforces --point or --batch");
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let p = parse_point(line).map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))?;
        out.push_str(classify(&map, p).as_str());
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}

/// Every touched key, plus `n` samples split between the padded bounding box
/// of the touched keys and the whole key cube.
fn query_keys(touched: &HashSet<VoxelKey>, n: usize, seed: u64) -> Vec<VoxelKey> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = [u16::MAX; 3];
    let mut hi = [0u16; 3];
    for k in touched {
        for a in 0..3 {
            lo[a] = lo[a].min(k.axis(a));
            hi[a] = hi[a].max(k.axis(a));
        }
    }
    let mut keys: Vec<VoxelKey> = touched.iter().copied().collect();
    keys.sort_unstable_by_key(|k| (k.kx, k.ky, k.kz));
    for i in 0..n {
        let k = if i % 2 == 0 && !touched.is_empty() {
            let mut c = |a: usize| rng.gen_range(lo[a].saturating_sub(2)..=hi[a].saturating_add(2));
            VoxelKey::new(c(0), c(1), c(2))
        } else {
            VoxelKey::new(rng.gen(), rng.gen(), rng.gen())
        };
        keys.push(k);
    }
    keys
}

fn compare(args: &MapArgs, sample: usize, seed: u64) -> Result<()> {
    let cfg = args.config()?;
    let scans = args.load()?;
    let map = build_map(&scans, cfg, CostParams::accelerated(), args.rows)?;

    let mut reference = RefOctree::new(cfg);
    let mut unpruned = RefOctree::new(MapConfig { prune: false, ..cfg });
    let mut touched = HashSet::new();
    let mut updates = 0u64;
    for scan in &scans.scans {
        let (ups, _) = scan_updates(scan.origin, &scan.points, &cfg)?;
        for u in ups {
            reference.update(u);
            unpruned.update(u);
            touched.insert(u.key);
            updates += 1;
        }
    }

    let keys = query_keys(&touched, sample, seed);
    let mismatches = keys.iter().filter(|&&k| map.query(k) != reference.query(k)).count();
    let violations = map.verify();
    let (engine, pruned_ref, full) = (map.node_count(), reference.node_count(), unpruned.node_count());
    let savings = if full == 0 { 0.0 } else { 100.0 * (1.0 - engine as f64 / full as f64) };

    println!("voxel_updates      {updates}");
    println!("keys_checked       {}", keys.len());
    println!("mismatches         {mismatches}");
    println!("nodes_engine       {engine}");
    println!("nodes_reference    {pruned_ref}");
    println!("nodes_unpruned     {full}");
    println!("pruning_savings    {savings:.2}%");

    ensure!(map.stats().processed == updates, "engine processed {} updates, reference {updates}", map.stats().processed);
    ensure!(mismatches == 0, "{mismatches} query mismatches");
    ensure!(engine == pruned_ref, "node counts differ: engine {engine}, reference {pruned_ref}");
    ensure!(violations.is_empty(), "structural violations: {}", violations.join("; "));
    Ok(())
}

fn breakdown(args: &MapArgs, frame_points: Option<u64>, no_overlap: bool) -> Result<()> {
    let cfg = args.config()?;
    let scans = args.load()?;
    let mut reports = Vec::new();
    for mode in [CostMode::Baseline, CostMode::Accelerated] {
        let mut costs = CostParams::for_mode(mode);
        costs.overlap_raycast &= !no_overlap;
        let mut r = model_run(&scans, cfg, costs)?;
        r.frame_points = frame_points;
        print!("{}", r.to_table());
        println!();
        reports.push(r);
    }
    println!("speedup            {:.2}x", speedup(&reports[0], &reports[1])?);
    Ok(())
}

fn stats(map_path: &Path) -> Result<()> {
    let map = load_map(map_path)?;
    let cfg = map.config();
    println!("resolution         {}", cfg.resolution);
    println!("max_range          {}", cfg.max_range.map_or("none".to_string(), |r| r.to_string()));
    println!("{:<4} {:>10} {:>10} {:>8} {:>8} {:>10}", "pe", "blocks", "capacity", "util%", "stack", "nodes");
    for (pe, (used, cap)) in map.utilization().into_iter().enumerate() {
        let unit = map.pe(pe);
        println!(
            "{:<4} {:>10} {:>10} {:>8.2} {:>8} {:>10}",
            pe,
            used,
            cap,
            100.0 * used as f64 / cap as f64,
            unit.mem.prune_stack().len(),
            unit.node_count()
        );
    }
    println!("nodes              {}", map.node_count());
    println!("bytes_used         {}", map.bytes_used());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build { map, out, report, mode, frame_points, no_prune } => {
            build(&map, &out, &report, mode, frame_points, no_prune)
        }
        Command::Query { map, point, batch } => query(&map, point, batch.as_deref()),
        Command::Compare { map, sample, seed } => compare(&map, sample, seed),
        Command::Breakdown { map, frame_points, no_overlap } => breakdown(&map, frame_points, no_overlap),
        Command::Stats { map } => stats(&map),
        Command::Convert { graph, out } => {
            let scans = convert_graph(&graph).with_context(|| format!("reading {}", graph.display()))?;
            write_scans(&out, &scans).with_context(|| format!("writing {}", out.display()))?;
            println!("{} scans, {} points", scans.scans.len(), scans.point_count());
            Ok(())
        }
        Command::Generate { dims, resolution, scans, points, seed, out } => {
            let (file, room) = generate_room(&RoomSpec::new(dims, resolution, scans, points, seed))?;
            write_scans(&out, &file).with_context(|| format!("writing {}", out.display()))?;
            println!("{} scans, {} points", file.scans.len(), file.point_count());
            println!("interior voxels {}, wall voxels {}", room.interior_voxels(), room.wall_keys().len());
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| {
        e.downcast_ref::<omu_core::Error>().is_some_and(omu_core::Error::is_io) || e.is::<std::io::Error>()
    });
    if io {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_accept_commas_and_spaces() {
        assert_eq!(parse_point("1,-2.5,3e-1"), Ok([1.0, -2.5, 0.3]));
        assert_eq!(parse_point(" 1  2\t3 "), Ok([1.0, 2.0, 3.0]));
        assert!(parse_point("1,2").is_err());
        assert!(parse_point("1,2,x").is_err());
        assert!(parse_point("1,inf,2").is_err());
    }

    #[test]
    fn io_errors_map_to_one() {
        let io = anyhow::Error::from(omu_core::Error::from(std::io::Error::other("disk"))).context("reading m");
        assert_eq!(exit_code(&io), 1);
        assert_eq!(exit_code(&anyhow::Error::from(omu_core::Error::Format("x".into()))), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("3 query mismatches")), 2);
    }
}
