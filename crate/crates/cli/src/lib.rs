//! Command-line front end: `plan`, `validate`, `bench` and `gen-scene`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use multisuction::conv::{conv3d_dense, conv3d_sparse};
use multisuction::decode::decode;
use multisuction::kernel::generate_encoded_kernels;
use multisuction::oracle::{brute_force_candidates, candidate_key, check_conditions, MAX_ORACLE_CELLS, MAX_ORACLE_ORIENTATIONS};
use multisuction::orientation::{half_turn_spin, sample_gripper_orientations};
use multisuction::report::{build_report, reported_grasps, write_report, DEFAULT_RANKING_LIMIT};
use multisuction::rotation::zyz_rotation;
use multisuction::scene::{load_scene, save_scene};
use multisuction::synth::{presets, render_scene, SceneSpec};
use multisuction::voxel::generate_voxel_grid;
use multisuction::{
    plan, ply, Config, Error, Gripper, GraspCandidate, NormalOrientationMap, OrientationSamples, PlanRequest, Scene,
    VoxelGrid,
};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "multisuction", version, about = "Multi-cup suction grasp planning on affordance maps")]
struct Cli {
    /// Worker threads, 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan a grasp and write a JSON report.
    Plan(PlanArgs),
    /// Check the convolution pipeline against brute force and the grasp conditions.
    Validate(ValidateArgs),
    /// Time dense against sparse correlation on a random grid.
    Bench(BenchArgs),
    /// Render a synthetic scene into depth/affordance/intrinsics files.
    GenScene(GenSceneArgs),
}

#[derive(Debug, Args)]
struct SceneFiles {
    /// Depth image, NPY float32 (H, W), metres.
    #[arg(long)]
    depth: PathBuf,
    /// Affordance image, NPY float32 (H, W).
    #[arg(long)]
    affordance: PathBuf,
    /// Camera intrinsics JSON.
    #[arg(long)]
    intrinsics: PathBuf,
    /// Gripper JSON.
    #[arg(long)]
    gripper: PathBuf,
    /// Planner config JSON; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    scene: SceneFiles,
    /// Report JSON output.
    #[arg(long)]
    out: PathBuf,
    /// ASCII PLY with scene points and cup markers.
    #[arg(long)]
    ply: Option<PathBuf>,
    /// Ranking entries listed in the report, 0 lists all.
    #[arg(long, default_value_t = DEFAULT_RANKING_LIMIT)]
    ranking_limit: usize,
    /// Current TCP position `x,y,z`, used to choose the fallback cup.
    #[arg(long, value_parser = parse_point)]
    current_tcp: Option<Vector3<f64>>,
    /// Orientation-map cache JSON, rebuilt when missing or stale.
    #[arg(long)]
    orientation_cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Random oracle instances to run when no scene is given.
    #[arg(long, default_value_t = 20)]
    random: usize,
    /// Grid edge length of each random instance.
    #[arg(long, default_value_t = 24)]
    grid: usize,
    /// Orientations per random instance.
    #[arg(long, default_value_t = 8)]
    orientations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    depth: Option<PathBuf>,
    #[arg(long)]
    affordance: Option<PathBuf>,
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    #[arg(long)]
    gripper: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Grid edge length.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Fraction of occupied cells.
    #[arg(long, default_value_t = 0.05)]
    occupancy: f64,
    #[arg(long, default_value_t = 32)]
    kernels: usize,
    /// Two-cup spacing in metres at 5 mm cells.
    #[arg(long, default_value_t = 0.02)]
    spacing: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GenSceneArgs {
    /// Scene spec JSON.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    /// Built-in scene: flat-plate, two-boxes, small-blob or empty.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_point(s: &str) -> Result<Vector3<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vector3::new(x, y, z)),
        _ => Err("expected three finite numbers `x,y,z`".into()),
    }
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::TooLarge(_) => EXIT_USAGE,
            _ => EXIT_INPUT,
        };
        Failure { code, message: e.to_string() }
    }
}

fn fail<T>(code: i32, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure { code, message: message.into() })
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure { code: EXIT_INPUT, message: format!("{}: {e}", path.display()) })
}

fn load_gripper(path: &Path) -> Result<Gripper, Failure> {
    Gripper::from_json_str(&read_text(path)?)
        .map_err(|e| Failure { code: EXIT_INPUT, message: format!("{}: {e}", path.display()) })
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        None => Ok(Config::default()),
        Some(p) => Config::from_json_str(&read_text(p)?)
            .map_err(|e| Failure { code: EXIT_INPUT, message: format!("{}: {e}", p.display()) }),
    }
}

fn orientation_map(config: &Config, cache: Option<&Path>) -> Result<NormalOrientationMap, Failure> {
    Ok(match cache {
        Some(path) => NormalOrientationMap::load_or_build(path, config.angle_interval, config.eps_normal)?,
        None => NormalOrientationMap::build(config.angle_interval, config.eps_normal)?,
    })
}

fn summary(c: &GraspCandidate<f64>) -> String {
    let p = c.position;
    let bits: Vec<String> = c.activation_bits().iter().map(|b| b.to_string()).collect();
    format!("TCP [{:.4}, {:.4}, {:.4}] activation [{}]", p.x, p.y, p.z, bits.join(", "))
}

fn run_plan(args: &PlanArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let f = &args.scene;
    let config = load_config(f.config.as_deref())?;
    let gripper = load_gripper(&f.gripper)?;
    let scene: Scene = load_scene(&f.depth, &f.affordance, &f.intrinsics, config.normal_k)?;
    let map = orientation_map(&config, args.orientation_cache.as_deref())?;
    let mut req = PlanRequest::new(&scene, &gripper, &config).with_orientation_map(&map);
    if let Some(tcp) = args.current_tcp {
        req = req.with_current_tcp(tcp);
    }
    let outcome = plan(&req)?;
    write_report(&args.out, &build_report(&outcome, &config, &gripper, args.ranking_limit))?;
    if let Some(path) = &args.ply {
        ply::save_ply(path, &scene, &reported_grasps(&outcome, args.ranking_limit))?;
    }
    let detail = match (&outcome.plan, outcome.optimal()) {
        (Some(p), Some(c)) => format!(
            ": maxObj {}, J {:.4}, {}, {} ranked",
            p.optimal().score.max_obj,
            p.optimal().score.j,
            summary(c),
            p.ranking.len()
        ),
        (None, Some(c)) => format!(": {}", summary(c)),
        _ => String::new(),
    };
    let _ = writeln!(out, "{}{detail}", outcome.kind.name());
    Ok(EXIT_OK)
}

type Keys = BTreeSet<multisuction::oracle::CandidateKey>;

fn keys(c: &[GraspCandidate<f64>]) -> Keys {
    c.iter().filter_map(candidate_key).collect()
}

/// Pipeline and brute-force candidate sets on one grid.
fn oracle_sets(grid: &VoxelGrid<f64>, samples: &OrientationSamples<f64>, gripper: &Gripper) -> Result<(Keys, Keys), Failure> {
    let l = grid.voxel_size();
    let kernels = generate_encoded_kernels(&samples.rotations, gripper, l)?;
    let fast = keys(&decode(&conv3d_sparse(grid, &kernels), grid, samples, gripper));
    let brute = keys(&brute_force_candidates(grid, samples, gripper, l)?);
    Ok((fast, brute))
}

fn validate_random(args: &ValidateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if args.grid == 0 || args.orientations == 0 {
        return fail(EXIT_USAGE, "--grid and --orientations must be positive");
    }
    if args.grid.pow(3) > MAX_ORACLE_CELLS || args.orientations > MAX_ORACLE_ORIENTATIONS {
        return fail(
            EXIT_USAGE,
            format!("brute force is limited to {MAX_ORACLE_CELLS} cells and {MAX_ORACLE_ORIENTATIONS} orientations"),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let l = 0.005;
    let mut mismatches = 0;
    for i in 0..args.random {
        let dims = [args.grid; 3];
        let p = rng.random_range(0.02..=0.10);
        let occ = (0..args.grid.pow(3)).map(|_| rng.random_bool(p)).collect();
        let grid = VoxelGrid::from_occupancy(Vector3::zeros(), l, dims, occ);
        let angles = (0..args.orientations)
            .map(|_| [rng.random_range(-3.1..3.1), rng.random_range(0.0..1.5), rng.random_range(-3.1..3.1)])
            .collect();
        let samples = OrientationSamples::from_angles(angles);
        let gripper = if i % 2 == 0 {
            Gripper::two_cup(rng.random_range(0.02..0.06), 0.005)?
        } else {
            Gripper::four_cup_square(rng.random_range(0.015..0.04), 0.005)?
        };
        let (fast, brute) = oracle_sets(&grid, &samples, &gripper)?;
        let ok = fast == brute;
        mismatches += usize::from(!ok);
        let _ = writeln!(
            out,
            "instance {i}: {} cups, occupancy {:.3}, {} candidates, {}",
            gripper.cup_count(),
            p,
            brute.len(),
            if ok { "match" } else { "MISMATCH" }
        );
    }
    let _ = writeln!(out, "{} instances, {mismatches} mismatches", args.random);
    Ok(if mismatches == 0 { EXIT_OK } else { EXIT_VALIDATION })
}

fn validate_scene(args: &ValidateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let (Some(depth), Some(aff), Some(intr), Some(grip)) = (&args.depth, &args.affordance, &args.intrinsics, &args.gripper)
    else {
        return fail(EXIT_USAGE, "scene validation needs --depth, --affordance, --intrinsics and --gripper");
    };
    let config = load_config(args.config.as_deref())?;
    let gripper = load_gripper(grip)?;
    let scene: Scene = load_scene(depth, aff, intr, config.normal_k)?;
    let map = orientation_map(&config, None)?;
    let mut failures = 0;

    match generate_voxel_grid(&scene, config.voxel_size, config.min_points_per_voxel) {
        Ok(grid) if grid.cell_count() <= MAX_ORACLE_CELLS => {
            let all = sample_gripper_orientations(
                &scene,
                &map,
                config.top_fraction,
                half_turn_spin(config.symmetric_gamma, &gripper),
            );
            let stride = all.len().div_ceil(MAX_ORACLE_ORIENTATIONS).max(1);
            let samples = OrientationSamples::from_angles(all.angles.iter().step_by(stride).copied().collect());
            let (fast, brute) = oracle_sets(&grid, &samples, &gripper)?;
            let ok = fast == brute;
            failures += usize::from(!ok);
            let _ = writeln!(
                out,
                "oracle: {} orientations, {} candidates, {}",
                samples.len(),
                brute.len(),
                if ok { "match" } else { "MISMATCH" }
            );
        }
        Ok(grid) => {
            let _ = writeln!(out, "oracle: skipped, grid has {} cells (limit {MAX_ORACLE_CELLS})", grid.cell_count());
        }
        Err(Error::EmptyScene) => {
            let _ = writeln!(out, "oracle: skipped, no affordance-positive pixels");
        }
        Err(e) => return Err(e.into()),
    }

    let outcome = plan(&PlanRequest::new(&scene, &gripper, &config).with_orientation_map(&map))?;
    let _ = writeln!(out, "plan: {}", outcome.kind.name());
    if let Some(ranked) = &outcome.plan {
        let mut worst = 0.0f64;
        for (rank, entry) in ranked.ranking.iter().take(21).enumerate() {
            let r = check_conditions(&entry.candidate, &scene, &config, &gripper);
            worst = worst.max(r.max_distance_residual);
            if !(r.all() && r.coplanarity_residual <= config.voxel_size) {
                failures += 1;
                let _ = writeln!(
                    out,
                    "rank {rank}: conditions failed (contacts {}, coplanar {}, normals {}, distances {}, centres {})",
                    r.contacts, r.coplanar, r.normals, r.distances, r.centers_consistent
                );
            }
        }
        let _ = writeln!(
            out,
            "conditions: {} grasps checked, worst distance residual {:.2} mm",
            ranked.ranking.len().min(21),
            worst * 1e3
        );
    }
    Ok(if failures == 0 { EXIT_OK } else { EXIT_VALIDATION })
}

fn run_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if args.depth.is_some() || args.affordance.is_some() {
        validate_scene(args, out)
    } else {
        validate_random(args, out)
    }
}

fn run_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if args.size == 0 || args.kernels == 0 || !(0.0..=1.0).contains(&args.occupancy) {
        return fail(EXIT_USAGE, "--size and --kernels must be positive and --occupancy within [0, 1]");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let n = args.size;
    let occ = (0..n * n * n).map(|_| rng.random_bool(args.occupancy)).collect();
    let grid = VoxelGrid::from_occupancy(Vector3::zeros(), 0.005, [n; 3], occ);
    let rotations: Vec<_> = (0..args.kernels)
        .map(|_| zyz_rotation(rng.random_range(-3.1..3.1), rng.random_range(0.0..1.5), rng.random_range(-3.1..3.1)))
        .collect();
    let gripper = Gripper::two_cup(args.spacing, 0.005)?;
    let kernels = generate_encoded_kernels(&rotations, &gripper, 0.005)?;
    let work = (grid.cell_count() * kernels.len()) as f64;

    let t = Instant::now();
    let dense = conv3d_dense(&grid, &kernels);
    let dense_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let sparse = conv3d_sparse(&grid, &kernels);
    let sparse_s = t.elapsed().as_secs_f64();
    let _ = writeln!(
        out,
        "grid {n}^3, {} occupied, {} kernels of extent {}",
        grid.occupied().len(),
        kernels.len(),
        kernels.extent
    );
    let _ = writeln!(out, "dense  {:>10.4} s  {:.3e} cells/s", dense_s, work / dense_s);
    let _ = writeln!(out, "sparse {:>10.4} s  {:.3e} cells/s", sparse_s, work / sparse_s);
    let _ = writeln!(out, "speedup {:.1}x, identical: {}", dense_s / sparse_s, dense == sparse);

    let (scene, _) = render_scene(&presets::two_boxes())?;
    let config = Config::default();
    let planner_gripper = Gripper::two_cup(0.08, 0.01)?;
    let outcome = plan(&PlanRequest::new(&scene, &planner_gripper, &config))?;
    let _ = writeln!(out, "planner stages on the two-box scene ({}):", outcome.kind.name());
    for t in &outcome.timings {
        let _ = writeln!(out, "  {:<24} {:>10.2} ms", t.stage, t.millis);
    }
    Ok(if dense == sparse { EXIT_OK } else { EXIT_VALIDATION })
}

fn run_gen_scene(args: &GenSceneArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let spec = match (&args.spec, args.preset.as_deref()) {
        (Some(path), _) => SceneSpec::from_json_str(&read_text(path)?)
            .map_err(|e| Failure { code: EXIT_INPUT, message: format!("{}: {e}", path.display()) })?,
        (None, Some("flat-plate")) => presets::flat_plate(),
        (None, Some("two-boxes")) => presets::two_boxes(),
        (None, Some("small-blob")) => presets::small_blob(),
        (None, Some("empty")) => presets::empty(),
        (None, Some(other)) => return fail(EXIT_USAGE, format!("unknown preset `{other}`")),
        (None, None) => return fail(EXIT_USAGE, "one of --spec or --preset is required"),
    };
    let (scene, truth) = render_scene(&spec)?;
    save_scene(&args.out_dir, &scene)?;
    let truth_path = args.out_dir.join("ground_truth.json");
    let text = serde_json::to_string_pretty(&serde_json::json!({ "regions": truth.regions })).map_err(Error::from)?;
    std::fs::write(&truth_path, text).map_err(|e| Failure { code: EXIT_INPUT, message: format!("{}: {e}", truth_path.display()) })?;
    let _ = writeln!(
        out,
        "{}x{} scene, {} affordable pixels, {} regions -> {}",
        scene.width(),
        scene.height(),
        scene.masked_indices().len(),
        truth.regions.len(),
        args.out_dir.display()
    );
    Ok(EXIT_OK)
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, S>(argv: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Plan(a) => run_plan(a, out),
        Command::Validate(a) => run_validate(a, out),
        Command::Bench(a) => run_bench(a, out),
        Command::GenScene(a) => run_gen_scene(a, out),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
